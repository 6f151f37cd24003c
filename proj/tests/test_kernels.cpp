#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "idr/kernels.hpp"

using namespace idr;

namespace {

std::uint64_t step(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<double> rand_vec(std::size_t n, std::uint64_t seed) {
    std::vector<double> v(n);
    std::uint64_t s = seed;
    for (double& x : v) x = 2.0 * (static_cast<double>(step(s) >> 11) * 0x1.0p-53) - 1.0;
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("scalar and avx2 elementwise kernels agree") {
    if (!kern::avx2_available()) return;  // nothing to compare on this host
    const kern::Impl& sc = kern::scalar_impl();
    const kern::Impl& vx = kern::avx2_impl();
    // Deliberately awkward lengths to exercise the vector tails.
    for (std::size_t n : {std::size_t{1}, std::size_t{3}, std::size_t{7}, std::size_t{8},
                          std::size_t{9}, std::size_t{31}, std::size_t{64}, std::size_t{1000},
                          std::size_t{1023}}) {
        const auto a = rand_vec(n, 10 * n + 1);
        const auto b = rand_vec(n, 10 * n + 2);

        std::vector<double> r1(n), r2(n);
        sc.add(a.data(), b.data(), r1.data(), n);
        vx.add(a.data(), b.data(), r2.data(), n);
        CHECK(max_abs_diff(r1, r2) == 0.0);

        sc.mul(a.data(), b.data(), r1.data(), n);
        vx.mul(a.data(), b.data(), r2.data(), n);
        CHECK(max_abs_diff(r1, r2) == 0.0);

        r1 = rand_vec(n, 4);
        r2 = r1;
        sc.axpy(0.37, a.data(), r1.data(), n);
        vx.axpy(0.37, a.data(), r2.data(), n);
        CHECK(max_abs_diff(r1, r2) < 1e-12);

        sc.scale(a.data(), -1.75, r1.data(), n);
        vx.scale(a.data(), -1.75, r2.data(), n);
        CHECK(max_abs_diff(r1, r2) == 0.0);

        sc.relu(a.data(), r1.data(), n);
        vx.relu(a.data(), r2.data(), n);
        CHECK(max_abs_diff(r1, r2) == 0.0);

        r1 = rand_vec(n, 5);
        r2 = r1;
        sc.relu_backward(a.data(), b.data(), r1.data(), n);
        vx.relu_backward(a.data(), b.data(), r2.data(), n);
        CHECK(max_abs_diff(r1, r2) == 0.0);

        CHECK(std::abs(sc.dot(a.data(), b.data(), n) - vx.dot(a.data(), b.data(), n)) < 1e-12);
    }
}

TEST_CASE("scalar and avx2 gemm variants agree") {
    if (!kern::avx2_available()) return;
    const kern::Impl& sc = kern::scalar_impl();
    const kern::Impl& vx = kern::avx2_impl();
    struct Dims {
        std::size_t m, k, n;
    };
    for (const Dims d : {Dims{1, 1, 1}, Dims{3, 5, 7}, Dims{8, 8, 8}, Dims{13, 17, 9},
                         Dims{32, 64, 48}, Dims{5, 100, 3}}) {
        const std::size_t mn = d.m * d.n;
        const auto a = rand_vec(d.m * d.k, 100 + d.m);
        const auto b = rand_vec(d.k * d.n, 200 + d.n);
        const auto at = rand_vec(d.k * d.m, 300 + d.m);
        const auto bt = rand_vec(d.n * d.k, 400 + d.n);

        for (bool accumulate : {false, true}) {
            std::vector<double> r1(mn, 0.5), r2(mn, 0.5);
            sc.gemm_nn(d.m, d.n, d.k, a.data(), b.data(), r1.data(), accumulate);
            vx.gemm_nn(d.m, d.n, d.k, a.data(), b.data(), r2.data(), accumulate);
            CHECK(max_abs_diff(r1, r2) < 1e-12);

            std::fill(r1.begin(), r1.end(), -0.25);
            std::fill(r2.begin(), r2.end(), -0.25);
            sc.gemm_nt(d.m, d.n, d.k, a.data(), bt.data(), r1.data(), accumulate);
            vx.gemm_nt(d.m, d.n, d.k, a.data(), bt.data(), r2.data(), accumulate);
            CHECK(max_abs_diff(r1, r2) < 1e-12);

            std::fill(r1.begin(), r1.end(), 1.0);
            std::fill(r2.begin(), r2.end(), 1.0);
            sc.gemm_tn(d.m, d.n, d.k, at.data(), b.data(), r1.data(), accumulate);
            vx.gemm_tn(d.m, d.n, d.k, at.data(), b.data(), r2.data(), accumulate);
            CHECK(max_abs_diff(r1, r2) < 1e-12);
        }
    }
}

TEST_CASE("gemm against a textbook triple loop") {
    const kern::Impl& impl = kern::active();
    const std::size_t m = 7, k = 11, n = 5;
    const auto a = rand_vec(m * k, 7);
    const auto b = rand_vec(k * n, 8);
    std::vector<double> expect(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) expect[i * n + j] += a[i * k + p] * b[p * n + j];
    std::vector<double> got(m * n, 123.0);
    impl.gemm_nn(m, n, k, a.data(), b.data(), got.data(), false);
    CHECK(max_abs_diff(got, expect) < 1e-12);
}

TEST_CASE("dispatch reports a valid implementation") {
    const std::string name = kern::active().name;
    CHECK((name == "scalar" || name == "avx2"));
}

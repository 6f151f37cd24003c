#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "idr/ops.hpp"
#include "idr/relation.hpp"

using namespace idr;

namespace {

std::uint64_t step(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Tensor uniform(std::vector<int> shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::uint64_t s = seed;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const double u = static_cast<double>(step(s) >> 11) * 0x1.0p-53;
        t.data()[i] = lo + (hi - lo) * u;
    }
    return t;
}

}  // namespace

TEST_CASE("threshold masks strictly below, keeps the boundary") {
    Tape tape;
    Tensor m = Tensor::from({3, 3}, {0.5, 0.0, -0.3, 1.0, 0.2, 0.0, -0.1, 0.4, 0.9});
    const std::vector<int> present = {0, 1, 2};
    Tensor sub = relation::transform_relations(tape, m, present, 0.0);
    CHECK(sub.data()[0] == 0.5);
    CHECK(sub.data()[1] == 0.0);            // exactly at the threshold: kept
    CHECK(sub.data()[2] == ops::kNegInf);   // -0.3 < 0: masked
    CHECK(sub.data()[6] == ops::kNegInf);   // -0.1 < 0: masked
}

TEST_CASE("submatrix restriction follows the present ids") {
    Tape tape;
    Tensor m = Tensor::from({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor sub = relation::transform_relations(tape, m, {0, 2}, ops::kNegInf);
    CHECK(sub.shape() == std::vector<int>{2, 2});
    CHECK(sub.data()[0] == 1.0);
    CHECK(sub.data()[1] == 3.0);
    CHECK(sub.data()[2] == 7.0);
    CHECK(sub.data()[3] == 9.0);
}

TEST_CASE("present ids must be strictly increasing") {
    Tape tape;
    Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_AS(relation::transform_relations(tape, m, {1, 0}, 0.0), ShapeError);
    CHECK_THROWS_AS(relation::transform_relations(tape, m, {0, 0}, 0.0), ShapeError);
}

TEST_CASE("a fully masked row raises DegenerateRowError") {
    Tape tape;
    Tensor m = Tensor::from({2, 2}, {-1.0, -2.0, 0.5, 0.5});
    CHECK_THROWS_AS(relation::transform_relations(tape, m, {0, 1}, 0.0), DegenerateRowError);
}

TEST_CASE("single present class reduces to its own row") {
    Tape tape;
    Tensor m = Tensor::from({3, 3}, {0.2, 0, 0, 0, 0.9, 0, 0, 0, 0.4});
    Tensor sub = relation::transform_relations(tape, m, {1}, 0.0);
    CHECK(sub.shape() == std::vector<int>{1, 1});
    Tensor rows = Tensor::from({1, 4}, {1.5, -2.0, 0.25, 3.0});
    Tensor out = relation::interact(tape, sub, rows);
    for (int i = 0; i < 4; ++i) CHECK(out.data()[i] == rows.data()[i]);  // softmax of 1x1 is 1
}

TEST_CASE("a row like [5, -inf] copies the surviving row exactly") {
    Tape tape;
    Tensor masked = Tensor::from({2, 2}, {5.0, ops::kNegInf, 0.0, 0.0});
    Tensor rows = Tensor::from({2, 3}, {1.0, 2.0, 3.0, 10.0, 20.0, 30.0});
    Tensor out = relation::interact(tape, masked, rows);
    CHECK(out.data()[0] == 1.0);  // bitwise: the only weight is exactly 1
    CHECK(out.data()[1] == 2.0);
    CHECK(out.data()[2] == 3.0);
    CHECK(out.data()[3] == doctest::Approx(5.5));
    CHECK(out.data()[4] == doctest::Approx(11.0));
    CHECK(out.data()[5] == doctest::Approx(16.5));
}

TEST_CASE("interaction output rows stay inside the convex hull of the inputs") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Tape tape;
        Tensor m = uniform({4, 4}, seed, -0.5, 2.0);
        Tensor rows = uniform({4, 5}, seed + 50);
        Tensor sub = relation::transform_relations(tape, m, {0, 1, 2, 3}, ops::kNegInf);
        Tensor out = relation::interact(tape, sub, rows);
        for (int j = 0; j < 5; ++j) {
            double lo = rows.data()[j], hi = rows.data()[j];
            for (int i = 1; i < 4; ++i) {
                lo = std::min(lo, rows.data()[i * 5 + j]);
                hi = std::max(hi, rows.data()[i * 5 + j]);
            }
            for (int i = 0; i < 4; ++i) {
                CHECK(out.data()[i * 5 + j] >= lo - 1e-12);
                CHECK(out.data()[i * 5 + j] <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("interaction is equivariant to a consistent permutation") {
    Tape tape;
    Tensor m = uniform({3, 3}, 77, -0.2, 1.5);
    Tensor rows = uniform({3, 4}, 78);
    Tensor sub = relation::transform_relations(tape, m, {0, 1, 2}, ops::kNegInf);
    Tensor out = relation::interact(tape, sub, rows);

    // permute rows/cols of the matrix and the semantic rows by (2, 0, 1)
    const int perm[3] = {2, 0, 1};
    Tensor mp = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) mp.data()[i * 3 + j] = m.data()[perm[i] * 3 + perm[j]];
    Tensor rp = Tensor::zeros({3, 4});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) rp.data()[i * 4 + j] = rows.data()[perm[i] * 4 + j];
    Tensor outp = relation::interact(
        tape, relation::transform_relations(tape, mp, {0, 1, 2}, ops::kNegInf), rp);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(outp.data()[i * 4 + j] ==
                  doctest::Approx(out.data()[perm[i] * 4 + j]).epsilon(1e-12));
}

TEST_CASE("masked entries do not influence the output at all") {
    Tape tape;
    Tensor a = Tensor::from({2, 2}, {0.7, -0.4, 0.1, 0.6});
    Tensor b = Tensor::from({2, 2}, {0.7, -123.0, 0.1, 0.6});  // only the masked entry differs
    Tensor rows = uniform({2, 3}, 5);
    Tensor oa = relation::interact(tape, relation::transform_relations(tape, a, {0, 1}, 0.0), rows);
    Tensor ob = relation::interact(tape, relation::transform_relations(tape, b, {0, 1}, 0.0), rows);
    CHECK(std::memcmp(oa.data(), ob.data(), sizeof(double) * 6) == 0);
}

TEST_CASE("scatter places rows by pseudo label and zeroes the deleted class") {
    Tape tape;
    Tensor rows = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
    const std::vector<int> labels = {0, 2, 1, 0, 2, 2};  // 2 x 3 map; class 1 is deleted
    const std::vector<int> index_of = {0, -1, 1};
    Tensor out = relation::scatter_semantic(tape, rows, labels, index_of, 2, 3, 1);
    CHECK(out.shape() == std::vector<int>{2, 2, 3});
    // channel 0 plane
    CHECK(out.data()[0] == 1.0);
    CHECK(out.data()[1] == 3.0);
    CHECK(out.data()[2] == 0.0);  // deleted class position stays zero
    CHECK(out.data()[3] == 1.0);
    CHECK(out.data()[4] == 3.0);
    CHECK(out.data()[5] == 3.0);
    // channel 1 plane
    CHECK(out.data()[6] == 2.0);
    CHECK(out.data()[7] == 4.0);
    CHECK(out.data()[8] == 0.0);
}

TEST_CASE("scatter matches a brute-force oracle over random instances") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const int k = 5, z = 3, h = 4, w = 6;
        std::uint64_t s = seed;
        std::vector<int> labels(static_cast<std::size_t>(h) * w);
        for (auto& l : labels) l = static_cast<int>(step(s) % k);
        std::vector<int> present;
        std::vector<int> index_of(k, -1);
        for (int id = 0; id < k; ++id)
            if (std::find(labels.begin(), labels.end(), id) != labels.end()) {
                index_of[static_cast<std::size_t>(id)] = static_cast<int>(present.size());
                present.push_back(id);
            }
        Tensor rows = uniform({static_cast<int>(present.size()), z}, seed + 30);
        Tape tape;
        Tensor out = relation::scatter_semantic(tape, rows, labels, index_of, h, w, -1);
        for (int c = 0; c < z; ++c)
            for (int p = 0; p < h * w; ++p) {
                const int idx = index_of[static_cast<std::size_t>(labels[static_cast<std::size_t>(p)])];
                CHECK(out.data()[c * h * w + p] == rows.data()[idx * z + c]);
            }
    }
}

TEST_CASE("identity state on all-present classes reproduces each row") {
    const relation::RelationState st = relation::RelationState::identity(3);
    Tape tape;
    Tensor m = Tensor::from({3, 3}, st.mean);
    Tensor rows = uniform({3, 4}, 9);
    Tensor sub = relation::transform_relations(tape, m, {0, 1, 2}, 0.0);
    Tensor out = relation::interact(tape, sub, rows);
    // softmax of (1, 0, 0) weights the own row ~0.576; outputs must differ
    // from plain copies but keep row sums consistent with a stochastic mix
    for (int i = 0; i < 3; ++i) {
        double mixed = 0.0;
        const double e = std::exp(1.0);
        const double self = e / (e + 2.0), other = 1.0 / (e + 2.0);
        for (int j = 0; j < 4; ++j) {
            mixed = self * rows.data()[i * 4 + j];
            for (int r = 0; r < 3; ++r)
                if (r != i) mixed += other * rows.data()[r * 4 + j];
            CHECK(out.data()[i * 4 + j] == doctest::Approx(mixed).epsilon(1e-12));
        }
    }
}

TEST_CASE("relation state stores exactly 2*K*K entries and counters start at one") {
    const relation::RelationState st = relation::RelationState::identity(6);
    CHECK(st.storage_entries() == 72);
    CHECK(st.mean.size() == 36);
    CHECK(st.var.size() == 36);
    for (long long c : st.counts) CHECK(c == 1);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) CHECK(st.mean[i * 6 + j] == (i == j ? 1.0 : 0.0));
}

TEST_CASE("gradients flow only through kept entries") {
    Tensor m = Tensor::from({2, 2}, {0.8, -0.5, 0.3, 0.2});
    Tensor rows = uniform({2, 3}, 13);
    ops::FdReport rep = ops::finite_difference_check(
        [=](Tape& t) {
            Tensor sub = relation::transform_relations(t, m, {0, 1}, 0.0);
            Tensor out = relation::interact(t, sub, rows);
            return ops::sum(t, ops::mul(t, out, out));
        },
        {m, rows});
    CHECK(rep.max_rel_err < 1e-6);

    Tape tape;
    Tensor m2 = Tensor::from({2, 2}, {0.8, -0.5, 0.3, 0.2});
    m2.set_requires_grad(true);
    Tensor sub = relation::transform_relations(tape, m2, {0, 1}, 0.0);
    Tensor out = relation::interact(tape, sub, rows);
    tape.backward(ops::sum(tape, ops::mul(tape, out, out)));
    CHECK(m2.grad()[1] == 0.0);  // masked entry
    // row 0 has a single survivor, so its softmax is constant; row 1 has two
    // competing entries and must carry gradient
    CHECK(m2.grad()[0] == 0.0);
    CHECK(m2.grad()[2] != 0.0);
    CHECK(m2.grad()[3] != 0.0);
}

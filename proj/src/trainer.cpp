#include "idr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "idr/ops.hpp"

namespace idr::trainer {

namespace fs = std::filesystem;

namespace {

// Purpose salts for the stateless seed derivation.
constexpr std::uint64_t kSceneSalt = 0x5343454e45;  // training scene stream
constexpr std::uint64_t kAugSalt = 0x415547;
constexpr std::uint64_t kDiagSalt = 0x44494147;
constexpr std::uint64_t kValSalt = 0x56414c;
constexpr std::uint64_t kTestSalt = 0x54455354;

std::uint64_t splitmix(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Tiny deterministic stream for the augmentation draws.
struct Stream {
    std::uint64_t state;
    double unit() { return static_cast<double>(splitmix(state) >> 11) * 0x1.0p-53; }
    int range(int hi_inclusive) {  // uniform in [0, hi]
        if (hi_inclusive <= 0) {
            splitmix(state);  // keep the draw order fixed
            return 0;
        }
        return static_cast<int>(splitmix(state) %
                                static_cast<std::uint64_t>(hi_inclusive + 1));
    }
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ContractError("cannot write " + path);
    out << text;
}

// Plain (non-differentiable) bilinear resize of a [3 x h x w] image,
// half-pixel centers, clamped borders.
std::vector<double> resize_image(const std::vector<double>& src, int h, int w, int oh, int ow) {
    std::vector<double> dst(static_cast<std::size_t>(3) * oh * ow);
    const double sy = static_cast<double>(h) / oh, sx = static_cast<double>(w) / ow;
    for (int y = 0; y < oh; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double ty = fy - y0;
        for (int x = 0; x < ow; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double tx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double* p = src.data() + static_cast<std::size_t>(c) * h * w;
                const double top = p[y0 * w + x0] + tx * (p[y0 * w + x1] - p[y0 * w + x0]);
                const double bot = p[y1 * w + x0] + tx * (p[y1 * w + x1] - p[y1 * w + x0]);
                dst[(static_cast<std::size_t>(c) * oh + y) * ow + x] = top + ty * (bot - top);
            }
        }
    }
    return dst;
}

std::vector<int> resize_labels(const std::vector<int>& src, int h, int w, int oh, int ow) {
    std::vector<int> dst(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        int sy = std::min(static_cast<int>((y + 0.5) * h / oh), h - 1);
        for (int x = 0; x < ow; ++x) {
            int sx = std::min(static_cast<int>((x + 0.5) * w / ow), w - 1);
            dst[static_cast<std::size_t>(y) * ow + x] = src[static_cast<std::size_t>(sy) * w + sx];
        }
    }
    return dst;
}

}  // namespace

std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    std::uint64_t s = a;
    splitmix(s);
    s ^= b;
    splitmix(s);
    s ^= c;
    splitmix(s);
    s ^= d;
    return splitmix(s);
}

double poly_lr(double base_lr, int iter, int total_iters) {
    const double frac = 1.0 - static_cast<double>(iter) / total_iters;
    return base_lr * std::pow(std::max(frac, 0.0), 0.9);
}

Augmented augment_sample(const scenes::SceneSample& sample, bool enabled, std::uint64_t seed) {
    const int h = sample.height, w = sample.width;
    Augmented out;
    if (!enabled) {
        out.image = Tensor::from({3, h, w}, sample.image);
        out.gt = sample.gt;
        return out;
    }
    Stream rng{mix64(seed, kAugSalt)};

    std::vector<double> img = sample.image;
    std::vector<int> gt = sample.gt;
    if (rng.unit() < 0.5) {  // horizontal flip
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y) {
                double* row = img.data() + (static_cast<std::size_t>(c) * h + y) * w;
                std::reverse(row, row + w);
            }
        for (int y = 0; y < h; ++y)
            std::reverse(gt.begin() + static_cast<std::size_t>(y) * w,
                         gt.begin() + static_cast<std::size_t>(y + 1) * w);
    }

    const double s = 0.5 + 1.5 * rng.unit();  // scale in [0.5, 2)
    const int sh = std::max(1, static_cast<int>(std::lround(h * s)));
    const int sw = std::max(1, static_cast<int>(std::lround(w * s)));
    img = resize_image(img, h, w, sh, sw);
    gt = resize_labels(gt, h, w, sh, sw);

    // Crop (scale up) or pad (scale down) back to h x w; padding is zero
    // pixels with the ignore label.
    const int dy = rng.range(std::abs(sh - h));
    const int dx = rng.range(std::abs(sw - w));
    std::vector<double> cimg(static_cast<std::size_t>(3) * h * w, 0.0);
    std::vector<int> cgt(static_cast<std::size_t>(h) * w, ops::kIgnoreLabel);
    const int copy_h = std::min(h, sh), copy_w = std::min(w, sw);
    const int src_y = sh >= h ? dy : 0, src_x = sw >= w ? dx : 0;
    const int dst_y = sh >= h ? 0 : dy, dst_x = sw >= w ? 0 : dx;
    for (int y = 0; y < copy_h; ++y) {
        for (int c = 0; c < 3; ++c)
            std::copy_n(img.data() + (static_cast<std::size_t>(c) * sh + src_y + y) * sw + src_x,
                        copy_w,
                        cimg.data() + (static_cast<std::size_t>(c) * h + dst_y + y) * w + dst_x);
        std::copy_n(gt.data() + static_cast<std::size_t>(src_y + y) * sw + src_x, copy_w,
                    cgt.data() + static_cast<std::size_t>(dst_y + y) * w + dst_x);
    }
    out.image = Tensor::from({3, h, w}, std::move(cimg));
    out.gt = std::move(cgt);
    return out;
}

Trainer Trainer::create(const config::RunConfig& cfg) {
    cfg.validate();
    Trainer t;
    t.cfg_ = cfg;
    t.net_ = model::IdrModel::create(cfg.model_config());
    t.velocity_.reserve(t.net_.params.tensors.size());
    for (const Tensor& p : t.net_.params.tensors)
        t.velocity_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    return t;
}

Trainer Trainer::from_snapshot(const checkpoint::Snapshot& snap) {
    Trainer t = create(snap.cfg);
    checkpoint::restore(snap, t.net_, t.velocity_);
    t.iteration_ = snap.iteration;
    return t;
}

scenes::SceneSample Trainer::make_scene(std::uint64_t salt, std::uint64_t index) const {
    return scenes::generate(cfg_.scene_config(), mix64(cfg_.seed, salt, index));
}

void Trainer::sgd_step(double lr) {
    for (std::size_t i = 0; i < net_.params.tensors.size(); ++i) {
        Tensor& p = net_.params.tensors[i];
        auto& w = p.values();
        const auto& g = p.grad_values();
        auto& v = velocity_[i];
        for (std::size_t n = 0; n < w.size(); ++n) {
            const double grad = (g.empty() ? 0.0 : g[n]) + cfg_.weight_decay * w[n];
            v[n] = cfg_.sgd_momentum * v[n] + grad;
            w[n] -= lr * v[n];
        }
    }
}

Trainer::IterStats Trainer::train_iteration() {
    const int it = iteration_;
    IterStats st;
    st.lr = poly_lr(cfg_.base_lr, it, cfg_.total_iters);
    net_.params.zero_grads();

    const int b_count = cfg_.batch_size;
    std::vector<Augmented> items;
    items.reserve(static_cast<std::size_t>(b_count));
    for (int b = 0; b < b_count; ++b) {
        const scenes::SceneSample s = scenes::generate(
            cfg_.scene_config(), mix64(cfg_.seed, kSceneSalt, static_cast<std::uint64_t>(it),
                                       static_cast<std::uint64_t>(b)));
        items.push_back(augment_sample(
            s, cfg_.augment,
            mix64(cfg_.seed, kAugSalt, static_cast<std::uint64_t>(it),
                  static_cast<std::uint64_t>(b))));
    }

    const bool dl_prototypes = net_.prototypes.mode == grouping::PrototypeMode::dataset_level;
    std::vector<Tensor> detached_feats;
    std::vector<std::vector<int>> gt_down;
    for (int b = 0; b < b_count; ++b) {
        Tape tape;
        try {
            model::IdrModel::Forward fw = net_.forward(tape, items[static_cast<std::size_t>(b)].image,
                                                       items[static_cast<std::size_t>(b)].gt);
            tape.backward(ops::scale(tape, fw.loss, 1.0 / b_count));
            st.loss += fw.loss.item() / b_count;
            st.loss_c += fw.coarse_loss.mean.item() / b_count;
            st.loss_o += fw.output_loss.mean.item() / b_count;
            if (dl_prototypes) {
                detached_feats.push_back(
                    Tensor::from(fw.pixel_features.shape(), fw.pixel_features.values()));
                gt_down.push_back(ops::downsample_labels_nearest(
                    items[static_cast<std::size_t>(b)].gt, cfg_.height, cfg_.width, 8));
            }
        } catch (const DegenerateRowError&) {
            st.skipped = true;
        }
        if (st.skipped) break;
    }
    if (st.skipped) {  // logged skip: no step, no state update
        ++iteration_;
        return st;
    }
    if (!std::isfinite(st.loss)) {
        st.non_finite = true;
        return st;
    }

    auto update_protos = [&] {
        for (std::size_t b = 0; b < detached_feats.size(); ++b)
            grouping::update_prototypes(net_.prototypes, detached_feats[b], gt_down[b]);
    };
    auto run_diag = [&] {
        if (net_.cfg.relation_update != model::RelationUpdateMode::deletion_diagnostics) return;
        diagnostics::HookOptions opts{cfg_.deletion_mode(), cfg_.delta_normalization()};
        const std::uint64_t s = mix64(cfg_.seed, kDiagSalt, static_cast<std::uint64_t>(it));
        try {
            const diagnostics::HookRecord rec =
                diagnostics::run_iteration_hook(net_, items[0].image, items[0].gt, opts, s);
            if (rec.skipped) {
                diag_log_ += std::to_string(it) + ",-1,-1,0,0\n";
            } else {
                for (const auto& p : rec.delta.pairs)
                    diag_log_ += std::to_string(it) + "," + std::to_string(rec.delta.deleted) +
                                 "," + std::to_string(p.reserved) + "," + fmt(p.r_mean) + "," +
                                 fmt(p.r_var) + "\n";
            }
        } catch (const Error&) {  // degenerate intervention: logged skip
            diag_log_ += std::to_string(it) + ",-1,-1,0,0\n";
        }
    };

    if (cfg_.prototype_update_before_step) update_protos();
    if (cfg_.diag_before_step) run_diag();
    sgd_step(st.lr);
    if (!cfg_.prototype_update_before_step) update_protos();
    if (!cfg_.diag_before_step) run_diag();
    ++iteration_;
    return st;
}

std::vector<int> Trainer::predict(const Tensor& image) {
    Tape tape;
    NoGradGuard guard(tape);
    const std::vector<int> ignore(static_cast<std::size_t>(image.dim(1)) * image.dim(2),
                                  ops::kIgnoreLabel);
    const model::IdrModel::Forward fw = net_.forward(tape, image, ignore);
    return ops::argmax_channels(fw.logits_up);
}

double Trainer::validate(int count) {
    std::vector<std::vector<int>> preds, gts;
    for (int v = 0; v < count; ++v) {
        scenes::SceneSample s = make_scene(kValSalt, static_cast<std::uint64_t>(v));
        preds.push_back(predict(Tensor::from({3, s.height, s.width}, s.image)));
        gts.push_back(std::move(s.gt));
    }
    return scenes::mean_iou(preds, gts, cfg_.num_classes).mean;
}

scenes::IoUReport Trainer::evaluate_split(const std::string& split, int count) {
    std::uint64_t salt;
    if (split == "val")
        salt = kValSalt;
    else if (split == "test")
        salt = kTestSalt;
    else
        throw ConfigError("unknown split '" + split + "' (expected val or test)");
    std::vector<std::vector<int>> preds, gts;
    for (int v = 0; v < count; ++v) {
        scenes::SceneSample s = make_scene(salt, static_cast<std::uint64_t>(v));
        preds.push_back(predict(Tensor::from({3, s.height, s.width}, s.image)));
        gts.push_back(std::move(s.gt));
    }
    return scenes::mean_iou(preds, gts, cfg_.num_classes);
}

void Trainer::save(const std::string& base) const {
    checkpoint::save(base, cfg_, net_, velocity_, iteration_);
}

int Trainer::run(const std::string& out_dir, bool quiet) {
    if (!out_dir.empty()) fs::create_directories(out_dir);
    auto flush = [&] {
        if (out_dir.empty()) return;
        write_file(out_dir + "/metrics.csv", metrics_);
        write_file(out_dir + "/diagnostics.csv", diag_log_);
    };
    while (iteration_ < cfg_.total_iters) {
        const IterStats st = train_iteration();
        if (st.non_finite) {
            flush();  // the last_good checkpoint from the previous interval survives
            if (!quiet) std::cerr << "non-finite loss at iteration " << iteration_ << "\n";
            return 3;
        }
        const int done = iteration_;
        std::string val_col;
        const bool do_val = cfg_.val_interval > 0 &&
                            (done % cfg_.val_interval == 0 || done == cfg_.total_iters);
        if (do_val) {
            const double miou = validate(cfg_.val_size);
            val_col = fmt(miou);
            if (!quiet)
                std::cout << "iter " << done << " loss " << st.loss << " val_miou " << miou
                          << "\n";
        }
        metrics_ += std::to_string(done - 1) + "," + fmt(st.loss) + "," + fmt(st.loss_c) + "," +
                    fmt(st.loss_o) + "," + fmt(st.lr) + "," + val_col + "\n";
        if (do_val && !out_dir.empty()) {
            save(out_dir + "/last_good");
            flush();
        }
    }
    if (!out_dir.empty()) save(out_dir + "/checkpoint");
    flush();
    return 0;
}

RelationExport inspect_relations(const checkpoint::Snapshot& snap, const std::string& out_dir) {
    RelationExport ex;
    ex.num_classes = snap.cfg.num_classes;
    const auto mean = snap.view("relation_mean");
    const auto var = snap.view("relation_var");
    ex.mean.assign(mean.begin(), mean.end());
    ex.var.assign(var.begin(), var.end());
    ex.storage_entries = ex.mean.size() + ex.var.size();

    const int k = ex.num_classes;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            if (i != j)
                ex.top_pairs.emplace_back(i, j, ex.mean[static_cast<std::size_t>(i) * k + j]);
    std::stable_sort(ex.top_pairs.begin(), ex.top_pairs.end(),
                     [](const auto& a, const auto& b) { return std::get<2>(a) > std::get<2>(b); });
    if (ex.top_pairs.size() > 5) ex.top_pairs.resize(5);

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        auto dump = [&](const std::string& name, const std::vector<double>& m) {
            std::ostringstream os;
            os << "deleted";
            for (int j = 0; j < k; ++j) os << ",class_" << j;
            os << "\n";
            for (int i = 0; i < k; ++i) {
                os << "class_" << i;
                for (int j = 0; j < k; ++j)
                    os << "," << fmt(m[static_cast<std::size_t>(i) * k + j]);
                os << "\n";
            }
            write_file(out_dir + "/" + name, os.str());
        };
        dump("m_r_mean.csv", ex.mean);
        dump("m_r_var.csv", ex.var);
    }
    return ex;
}

std::vector<AblateRow> ablate(const config::RunConfig& base,
                              const std::vector<std::string>& toggles,
                              const std::string& out_dir) {
    bool orth = false, dl = false, mr_mean = false, mr_var = false, bd = false, rd = false;
    for (const std::string& t : toggles) {
        bool* flag = nullptr;
        if (t == "IE-Orthogonal")
            flag = &orth;
        else if (t == "IE-DL")
            flag = &dl;
        else if (t == "Mr-mean")
            flag = &mr_mean;
        else if (t == "Mr-var")
            flag = &mr_var;
        else if (t == "BD")
            flag = &bd;
        else if (t == "RD")
            flag = &rd;
        else
            throw ConfigError("unknown ablation toggle '" + t + "'");
        if (*flag) throw ConfigError("duplicate ablation toggle '" + t + "'");
        *flag = true;
    }

    std::vector<std::string> ie_axis = {"none"};
    if (orth) ie_axis.push_back("orthogonal");
    if (dl) ie_axis.push_back("dataset_level");
    std::vector<std::string> rel_axis;
    if (mr_mean && mr_var)
        rel_axis = {"mean", "var", "both"};
    else if (mr_mean)
        rel_axis = {"mean"};
    else if (mr_var)
        rel_axis = {"var"};
    else
        rel_axis = {"both"};
    std::vector<std::string> del_axis;
    if (bd) del_axis.push_back("balanced");
    if (rd) del_axis.push_back("random");
    if (del_axis.empty()) del_axis.push_back(base.deletion);

    std::vector<AblateRow> rows;
    for (const std::string& ie : ie_axis)
        for (const std::string& rel : rel_axis)
            for (const std::string& del : del_axis) {
                config::RunConfig c = base;
                c.enhancement = ie;
                c.use_mean_relation = rel != "var";
                c.use_var_relation = rel != "mean";
                c.deletion = del;
                Trainer t = Trainer::create(c);
                while (t.iteration() < c.total_iters) {
                    const Trainer::IterStats st = t.train_iteration();
                    if (st.non_finite)
                        throw ContractError("ablation cell (" + ie + "," + rel + "," + del +
                                            ") diverged");
                }
                AblateRow row;
                row.ie = ie;
                row.relation = rel;
                row.deletion = del;
                row.seed = c.seed;
                row.miou = t.validate(c.val_size);
                row.deletion_counts = t.net().relations.counts;
                rows.push_back(std::move(row));
            }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ostringstream os;
        os << "ie,relation,deletion,seed,miou,deletion_counts\n";
        for (const AblateRow& r : rows) {
            os << r.ie << "," << r.relation << "," << r.deletion << "," << r.seed << ","
               << fmt(r.miou) << ",";
            for (std::size_t i = 0; i < r.deletion_counts.size(); ++i)
                os << (i ? ";" : "") << r.deletion_counts[i];
            os << "\n";
        }
        write_file(out_dir + "/ablate.csv", os.str());
    }
    return rows;
}

void generate_dataset(const config::RunConfig& cfg, const std::string& out_dir, int train_count,
                      int val_count) {
    fs::create_directories(out_dir);
    std::ostringstream manifest;
    manifest << "split,index,seed\n";
    const scenes::SceneConfig scfg = cfg.scene_config();

    struct Split {
        const char* name;
        std::uint64_t salt;
        int count;
    };
    const Split splits[2] = {{"train", kSceneSalt, train_count}, {"val", kValSalt, val_count}};
    for (const Split& sp : splits) {
        std::ofstream img(out_dir + "/" + sp.name + "_images.bin", std::ios::binary);
        std::ofstream lbl(out_dir + "/" + sp.name + "_labels.bin", std::ios::binary);
        if (!img || !lbl) throw ContractError("cannot write dataset files in " + out_dir);
        auto put_header = [&](std::ofstream& f, const char magic[9]) {
            f.write(magic, 8);
            const std::uint64_t dims[4] = {static_cast<std::uint64_t>(sp.count), 3,
                                           static_cast<std::uint64_t>(cfg.height),
                                           static_cast<std::uint64_t>(cfg.width)};
            f.write(reinterpret_cast<const char*>(dims), sizeof dims);
        };
        put_header(img, "IDRIMG01");
        put_header(lbl, "IDRLBL01");
        for (int i = 0; i < sp.count; ++i) {
            const std::uint64_t seed = mix64(cfg.seed, sp.salt, static_cast<std::uint64_t>(i));
            const scenes::SceneSample s = scenes::generate(scfg, seed);
            img.write(reinterpret_cast<const char*>(s.image.data()),
                      static_cast<std::streamsize>(s.image.size() * sizeof(double)));
            std::vector<std::int32_t> l(s.gt.begin(), s.gt.end());
            lbl.write(reinterpret_cast<const char*>(l.data()),
                      static_cast<std::streamsize>(l.size() * sizeof(std::int32_t)));
            manifest << sp.name << "," << i << "," << seed << "\n";
        }
    }
    write_file(out_dir + "/manifest.csv", manifest.str());
}

}  // namespace idr::trainer

#include <chrono>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "idr/checkpoint.hpp"
#include "idr/config.hpp"
#include "idr/errors.hpp"
#include "idr/trainer.hpp"

namespace {

idr::config::RunConfig load_config(const std::string& path, bool seed_set, std::uint64_t seed) {
    idr::config::RunConfig cfg =
        path.empty() ? idr::config::RunConfig{} : idr::config::RunConfig::from_file(path);
    if (seed_set) cfg.seed = seed;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IDRNet: intervention-driven relation context for semantic segmentation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_path, split = "val";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int eval_count = 0, train_count = 256, val_count = 32;
    std::vector<std::string> toggles;

    auto add_common = [&](CLI::App* cmd, bool with_checkpoint) {
        cmd->add_option("--config", config_path, "flat key = value config file");
        cmd->add_option("--seed", seed, "master seed (overrides the config)")
            ->each([&](const std::string&) { seed_set = true; });
        cmd->add_option("--out", out_dir, "output directory");
        if (with_checkpoint)
            cmd->add_option("--checkpoint", checkpoint_path, "checkpoint base path (no extension)");
    };

    CLI::App* train = app.add_subcommand("train", "train a model");
    add_common(train, true);
    CLI::App* evaluate = app.add_subcommand("evaluate", "per-class IoU of a checkpoint");
    add_common(evaluate, true);
    evaluate->add_option("--split", split, "val | test");
    evaluate->add_option("--count", eval_count, "number of scenes (default: config val_size)");
    CLI::App* ablate = app.add_subcommand("ablate", "train the toggle grid");
    add_common(ablate, false);
    ablate->add_option("--toggle", toggles,
                       "IE-Orthogonal | IE-DL | Mr-mean | Mr-var | BD | RD (repeatable)");
    CLI::App* inspect = app.add_subcommand("inspect-relations", "dump the relation matrices");
    add_common(inspect, true);
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference battery");
    add_common(gradcheck, false);
    CLI::App* gendata = app.add_subcommand("generate-data", "dump a scene dataset");
    add_common(gendata, false);
    gendata->add_option("--train-count", train_count, "training scenes to dump");
    gendata->add_option("--val-count", val_count, "validation scenes to dump");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) {
            idr::trainer::Trainer t =
                checkpoint_path.empty()
                    ? idr::trainer::Trainer::create(load_config(config_path, seed_set, seed))
                    : idr::trainer::Trainer::from_snapshot(idr::checkpoint::load(checkpoint_path));
            return t.run(out_dir);
        }
        if (evaluate->parsed()) {
            if (checkpoint_path.empty()) {
                std::cerr << "evaluate requires --checkpoint\n";
                return 1;
            }
            idr::trainer::Trainer t =
                idr::trainer::Trainer::from_snapshot(idr::checkpoint::load(checkpoint_path));
            const int count = eval_count > 0 ? eval_count : t.cfg().val_size;
            const idr::scenes::IoUReport rep = t.evaluate_split(split, count);
            for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
                std::cout << "class_" << c << " iou ";
                if (rep.valid[c])
                    std::cout << rep.per_class[c] << "\n";
                else
                    std::cout << "n/a (zero union)\n";
            }
            std::cout << "mean_iou " << rep.mean << "\n";
            return 0;
        }
        if (ablate->parsed()) {
            const auto rows = idr::trainer::ablate(load_config(config_path, seed_set, seed),
                                                   toggles, out_dir);
            for (const auto& r : rows)
                std::cout << r.ie << "," << r.relation << "," << r.deletion << " miou " << r.miou
                          << "\n";
            return 0;
        }
        if (inspect->parsed()) {
            if (checkpoint_path.empty()) {
                std::cerr << "inspect-relations requires --checkpoint\n";
                return 1;
            }
            const idr::trainer::RelationExport ex =
                idr::trainer::inspect_relations(idr::checkpoint::load(checkpoint_path), out_dir);
            std::cout << "storage_entries " << ex.storage_entries << " (2*K*K, K="
                      << ex.num_classes << ")\n";
            std::cout << "top off-diagonal mean relations (deleted -> reserved):\n";
            for (const auto& [i, j, v] : ex.top_pairs)
                std::cout << "  class_" << i << " -> class_" << j << " : " << v << "\n";
            return 0;
        }
        if (gradcheck->parsed()) {
            const auto start = std::chrono::steady_clock::now();
            const auto results = idr::trainer::gradcheck_suite();
            bool all_pass = true;
            for (const auto& r : results) {
                std::cout << (r.pass ? "PASS" : "FAIL") << " " << r.name << " max_rel_err "
                          << r.max_rel_err << "\n";
                all_pass = all_pass && r.pass;
            }
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::cout << (all_pass ? "gradcheck OK" : "gradcheck FAILED") << " (" << secs
                      << " s)\n";
            return all_pass ? 0 : 2;
        }
        if (gendata->parsed()) {
            if (out_dir.empty()) {
                std::cerr << "generate-data requires --out\n";
                return 1;
            }
            idr::trainer::generate_dataset(load_config(config_path, seed_set, seed), out_dir,
                                           train_count, val_count);
            std::cout << "wrote " << train_count << " train / " << val_count << " val scenes to "
                      << out_dir << "\n";
            return 0;
        }
    } catch (const idr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const idr::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}

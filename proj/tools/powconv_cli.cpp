#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "pcnn/experiments.hpp"
#include "pcnn/rng.hpp"

using namespace pcnn;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& t : split_list(s)) out.push_back(std::stoull(t));
    return out;
}

/// .bin files are CIFAR-10 binary records; directories hold PPMs + labels.txt
ImageDataset load_corpus(const std::string& path, std::size_t limit = 0) {
    if (fs::is_directory(path)) {
        ImageDataset ds = load_ppm_dir(path);
        return limit > 0 ? subset(ds, limit) : ds;
    }
    return load_cifar_bin(path, limit);
}

OptimConfig optim_from_config(const Config& cfg, const std::string& section, double default_lr) {
    OptimConfig o;
    o.learning_rate = cfg.get(section + ".learning_rate", default_lr);
    o.momentum = cfg.get(section + ".momentum", o.momentum);
    o.nesterov = cfg.get(section + ".nesterov", o.nesterov);
    o.weight_decay = cfg.get(section + ".weight_decay", o.weight_decay);
    o.pow_l2 = cfg.get(section + ".pow_l2", o.pow_l2);
    o.cos_shrink_threshold = cfg.get(section + ".cos_shrink_threshold", o.cos_shrink_threshold);
    o.cos_shrink_floor = cfg.get(section + ".cos_shrink_floor", o.cos_shrink_floor);
    o.validate();
    return o;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t instances) {
    auto items = run_gradcheck(seed, instances);
    bool all = true;
    for (const auto& it : items) {
        std::printf("[%s] %-34s instances=%zu max_rel_err=%.3e (tol %.0e)\n", it.pass ? "PASS" : "FAIL",
                    it.name.c_str(), it.instances, it.max_rel_err, it.tolerance);
        all = all && it.pass;
    }
    std::printf("%s\n", all ? "gradcheck: all checks passed" : "gradcheck: FAILURES present");
    return all ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"powered-convolution engine and experiment harness"};
    app.require_subcommand(1);

    std::string config_path, out_path, data_path, test_path, variant = "base", corpus_a, corpus_b;
    std::string models_arg, kind, kinds = "all", corpus_path, model_path;
    std::uint64_t seed = 0;
    std::size_t runs = 10, instances = 100, limit = 0, count = 1000, classes = 10, epochs_cli = 0, batch_cli = 0;
    bool identity_control = false, freeze_pow = false, diverged = true;
    std::string ns_arg = "1,2,4,8", ms_arg = "16,64,256", hiddens_arg = "64,256,1024", variants_arg;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "line-oriented key = value config file");
        cmd->add_option("--seed", seed, "master seed");
        cmd->add_option("--out", out_path, "output directory or file");
    };

    auto* gc = app.add_subcommand("gradcheck", "finite-difference validation of all analytic gradients");
    gc->add_option("--seed", seed);
    gc->add_option("--instances", instances, "random instances per operation (default 100)");

    auto* t1 = app.add_subcommand("table1", "synthetic divergence classification experiment");
    add_common(t1);
    t1->add_option("--runs", runs);
    t1->add_option("--n", ns_arg, "determinant feature counts, comma separated");
    t1->add_option("--variant", variants_arg, "variant subset, comma separated");
    t1->add_option("--epochs", epochs_cli);

    auto* t2 = app.add_subcommand("table2", "power-approximation regression experiment");
    add_common(t2);
    t2->add_option("--runs", runs);
    t2->add_option("--m", ms_arg, "input dimensions");
    t2->add_option("--hidden", hiddens_arg, "hidden sizes");
    t2->add_option("--epochs", epochs_cli);
    t2->add_flag("--identity-control", identity_control, "force all exponents to 1 (sanity control)");

    auto* tr = app.add_subcommand("train", "train the 3-conv network on an image corpus");
    add_common(tr);
    tr->add_option("--data", data_path, "training corpus (.bin or ppm dir)")->required();
    tr->add_option("--test", test_path, "held-out corpus");
    tr->add_option("--variant", variant, "base | in{1,2,4,8} | out{2,4,8}");
    tr->add_option("--epochs", epochs_cli);
    tr->add_option("--batch", batch_cli);
    tr->add_option("--limit", limit, "use only the first N images");
    tr->add_flag("--freeze-pow", freeze_pow, "keep (alpha, beta) fixed at 0");

    auto* gd = app.add_subcommand("gen-data", "generate datasets");
    add_common(gd);
    gd->add_option("--kind", kind, "table1 | table2 | cifar-synth | ppm-corpus")->required();
    gd->add_option("--count", count, "sample count");
    gd->add_option("--classes", classes, "class count (image corpora)");
    gd->add_option("--n", ns_arg, "determinant features (table1)");
    gd->add_option("--m", ms_arg, "input dimension (table2)");
    gd->add_flag("--diverged,!--no-diverged", diverged, "independent train/test kappas (table1)");

    auto* df = app.add_subcommand("deform", "produce a deformed corpus with manifest");
    add_common(df);
    df->add_option("--in", data_path, "input corpus (.bin or ppm dir)")->required();
    df->add_option("--kinds", kinds, "all | comma list");
    df->add_option("--model", model_path, "checkpoint for targeted occlusion saliency");
    df->add_option("--limit", limit, "use only the first N images");

    auto* rb = app.add_subcommand("robustness", "top-1/top-5 errors over a deformed corpus");
    add_common(rb);
    rb->add_option("--models", models_arg, "comma list of checkpoint dirs")->required();
    rb->add_option("--corpus", corpus_path, "deform output directory")->required();

    auto* st = app.add_subcommand("stats", "per-layer activation moments and JS divergence");
    add_common(st);
    st->add_option("--model", model_path, "checkpoint dir")->required();
    st->add_option("--corpus-a", corpus_a, "reference corpus")->required();
    st->add_option("--corpus-b", corpus_b, "comparison corpus")->required();
    st->add_option("--limit", limit, "use only the first N images of each");

    CLI11_PARSE(app, argc, argv);

    try {
        Config cfg = config_path.empty() ? Config{} : Config::from_file(config_path);
        seed = cfg.get("seed", seed);

        if (gc->parsed()) return cmd_gradcheck(seed, instances);

        if (t1->parsed()) {
            Table1Options opt;
            opt.determinants = split_sizes(cfg.get("table1.n", ns_arg));
            if (!variants_arg.empty()) opt.variants = split_list(variants_arg);
            opt.runs = std::size_t(cfg.get("table1.runs", int(runs)));
            opt.seed = seed;
            opt.train.optim = optim_from_config(cfg, "optim", 0.01);
            opt.train.epochs = epochs_cli ? epochs_cli : std::size_t(cfg.get("table1.epochs", 100));
            opt.train.batch = std::size_t(cfg.get("table1.batch", 128));
            opt.train_count = std::size_t(cfg.get("table1.train_count", 10000));
            opt.test_count = std::size_t(cfg.get("table1.test_count", 10000));
            opt.out_dir = out_path.empty() ? "out/table1" : out_path;
            auto cells = run_table1(opt);
            for (const auto& c : cells)
                std::printf("%-14s N=%zu  %.2f +/- %.2f %%  (runs %zu, diverged %zu)\n", c.variant.c_str(),
                            c.determinant, c.mean, c.stddev, c.accuracies.size(), c.diverged_runs);
            return 0;
        }

        if (t2->parsed()) {
            Table2Options opt;
            opt.input_dims = split_sizes(cfg.get("table2.m", ms_arg));
            opt.hidden_sizes = split_sizes(cfg.get("table2.hidden", hiddens_arg));
            opt.runs = std::size_t(cfg.get("table2.runs", int(runs)));
            opt.seed = seed;
            opt.identity_control = identity_control;
            opt.train.optim = optim_from_config(cfg, "optim", 0.02);
            opt.train.epochs = epochs_cli ? epochs_cli : std::size_t(cfg.get("table2.epochs", 20));
            opt.train.batch = std::size_t(cfg.get("table2.batch", 128));
            opt.samples = std::size_t(cfg.get("table2.samples", 10000));
            opt.out_dir = out_path.empty() ? "out/table2" : out_path;
            auto cells = run_table2(opt);
            for (const auto& c : cells)
                std::printf("M=%-4zu hidden=%-5zu best R = %.1f +/- %.1f %%  (all-run mean %.1f, runs %zu)\n",
                            c.input_dim, c.hidden, c.best_mean, c.best_std, c.all_mean, c.run_mean.size());
            return 0;
        }

        if (tr->parsed()) {
            ImageDataset train_set = load_corpus(data_path, limit);
            std::optional<ImageDataset> test_set;
            if (!test_path.empty()) test_set = load_corpus(test_path, limit);
            CnnTrainOptions opt;
            opt.variant = variant;
            opt.classes = train_set.classes;
            opt.c1 = std::size_t(cfg.get("train.c1", 16));
            opt.c2 = std::size_t(cfg.get("train.c2", 32));
            opt.c3 = std::size_t(cfg.get("train.c3", 64));
            opt.freeze_pow = freeze_pow;
            opt.train.optim = optim_from_config(cfg, "optim", 0.02);
            opt.train.epochs = epochs_cli ? epochs_cli : std::size_t(cfg.get("train.epochs", 20));
            opt.train.batch = batch_cli ? batch_cli : std::size_t(cfg.get("train.batch", 64));
            opt.train.seed = seed;
            opt.out_dir = out_path.empty() ? "out/train_" + variant : out_path;
            Network net = make_cnn_network(variant, train_set.classes, opt.c1, opt.c2, opt.c3, freeze_pow);
            net.init_params(mix64(seed ^ hash_str("cnn.init")));
            CnnTrainResult res = train_cnn(net, train_set, test_set ? &*test_set : nullptr, opt);
            for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
                std::printf("epoch %zu loss %.5f%s\n", e, res.epoch_loss[e],
                            e < res.epoch_test_acc.size()
                                ? (" test_acc " + fmt_double(res.epoch_test_acc[e]) + "%").c_str()
                                : "");
            if (res.diverged) {
                std::fprintf(stderr, "training diverged (NaN loss); last finite checkpoint kept\n");
                return 1;
            }
            std::printf("checkpoint: %s\n", res.checkpoint_dir.c_str());
            return 0;
        }

        if (gd->parsed()) {
            if (out_path.empty()) throw ConfigError("gen-data needs --out");
            if (kind == "table1") {
                SyntheticClassSpec spec;
                spec.total_features = 128;
                spec.determinant = split_sizes(ns_arg).at(0);
                spec.train_count = count;
                spec.test_count = count;
                spec.seed = seed;
                auto pair = make_classification_dataset(spec, diverged);
                fs::create_directories(out_path);
                write_pct((fs::path(out_path) / "train_features.pct").string(), pair.train.features);
                write_pct((fs::path(out_path) / "test_features.pct").string(), pair.test.features);
                auto labels_tensor = [](const std::vector<int>& l) {
                    Tensor t({l.size()});
                    for (std::size_t i = 0; i < l.size(); ++i) t[i] = double(l[i]);
                    return t;
                };
                write_pct((fs::path(out_path) / "train_labels.pct").string(), labels_tensor(pair.train.labels));
                write_pct((fs::path(out_path) / "test_labels.pct").string(), labels_tensor(pair.test.labels));
                std::ofstream prov(fs::path(out_path) / "provenance.txt");
                prov << "dataset = table1 divergence\nM = 128\nN = " << spec.determinant << "\ntrain = " << count
                     << "\ntest = " << count << "\ndiverged = " << (diverged ? 1 : 0) << "\nseed = " << seed << "\n";
            } else if (kind == "table2") {
                auto ds = make_power_regression_dataset(split_sizes(ms_arg).at(0), count, seed);
                fs::create_directories(out_path);
                write_pct((fs::path(out_path) / "x.pct").string(), ds.x);
                write_pct((fs::path(out_path) / "y.pct").string(), ds.y);
                std::ofstream prov(fs::path(out_path) / "provenance.txt");
                prov << "dataset = table2 power regression\nM = " << ds.x.dim(1) << "\nsamples = " << count
                     << "\nseed = " << seed << "\n";
            } else if (kind == "cifar-synth") {
                save_cifar_bin(out_path, make_synthetic_corpus(count, classes, 32, seed));
            } else if (kind == "ppm-corpus") {
                save_ppm_dir(out_path, make_synthetic_corpus(count, classes, 32, seed));
            } else {
                throw ConfigError("unknown gen-data kind '" + kind + "'");
            }
            std::printf("wrote %s\n", out_path.c_str());
            return 0;
        }

        if (df->parsed()) {
            if (out_path.empty()) throw ConfigError("deform needs --out");
            ImageDataset corpus = load_corpus(data_path, limit);
            std::vector<std::string> kind_list =
                kinds == "all" ? robustness_deformations() : split_list(kinds);
            Network net;
            Network* net_ptr = nullptr;
            if (!model_path.empty()) {
                net = Network::load(model_path);
                net_ptr = &net;
            }
            DeformedCorpus dc = build_deformed_corpus(corpus, kind_list, seed, net_ptr);
            save_deformed_corpus(out_path, dc);
            std::printf("wrote %zu deformations x %zu images under %s\n", dc.variant_names.size(), corpus.count(),
                        out_path.c_str());
            return 0;
        }

        if (rb->parsed()) {
            std::vector<Network> models;
            std::vector<std::string> names;
            for (const auto& p : split_list(models_arg)) {
                models.push_back(Network::load(p));
                names.push_back(fs::path(p).parent_path().filename().string() + "/" +
                                fs::path(p).filename().string());
            }
            DeformedCorpus dc = load_deformed_corpus(corpus_path);
            const std::string out = out_path.empty() ? "out/robustness.csv" : out_path;
            RobustnessReport rep = evaluate_robustness(models, names, dc, 128, out);
            std::printf("filtered pool: %zu images\n", rep.filtered_count);
            for (const auto& c : rep.cells)
                std::printf("%-28s %-18s top1 %.2f%%  top5 %.2f%%\n", c.model.c_str(), c.deformation.c_str(),
                            c.top1_error, c.top5_error);
            return 0;
        }

        if (st->parsed()) {
            Network net = Network::load(model_path);
            ImageDataset a = load_corpus(corpus_a, limit);
            ImageDataset b = load_corpus(corpus_b, limit);
            const std::string out = out_path.empty() ? "out/stats.csv" : out_path;
            auto layers = run_stats(net, a, b, 128, 200000, out);
            for (const auto& l : layers)
                std::printf("%-14s jsd %.5f  skew %.3f -> %.3f  exkurt %.3f -> %.3f\n", l.layer.c_str(), l.jsd,
                            l.a.skewness, l.b.skewness, l.a.excess_kurtosis, l.b.excess_kurtosis);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
    return 0;
}

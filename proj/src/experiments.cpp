#include "pcnn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pcnn/rng.hpp"

namespace pcnn {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- csv

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_csv(const std::string& path, const std::string& header_comment,
               const std::vector<std::string>& columns, const std::vector<std::vector<std::string>>& rows) {
    fs::create_directories(fs::path(path).parent_path().empty() ? "." : fs::path(path).parent_path().string());
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    if (!header_comment.empty()) os << "# " << header_comment << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
    os << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << "\n";
    }
}

// ---------------------------------------------------------- divergence

const std::vector<std::string>& divergence_variants() {
    static const std::vector<std::string> v{"base_no_div", "base",        "bn_only",
                                            "bn_trans",    "base_1layer", "base_2layers",
                                            "tanh",        "softsign",    "power"};
    return v;
}

Network make_divergence_network(const std::string& variant, std::size_t features, std::size_t hidden,
                                std::size_t classes) {
    Network net(LossKind::SoftmaxCrossEntropy);
    if (variant == "bn_only")
        net.emplace<BatchNormLayer>(features, false);
    else if (variant == "bn_trans")
        net.emplace<BatchNormLayer>(features, true);
    else if (variant == "tanh")
        net.emplace<ActivationLayer>(ActKind::Tanh);
    else if (variant == "softsign")
        net.emplace<ActivationLayer>(ActKind::Softsign);
    else if (variant == "power")
        net.emplace<PsiLayer>();
    else if (variant != "base" && variant != "base_no_div" && variant != "base_1layer" && variant != "base_2layers")
        throw ConfigError("unknown divergence variant '" + variant + "'");

    net.emplace<LinearLayer>(features, hidden);
    net.emplace<ActivationLayer>(ActKind::ReLU);
    const int extra = variant == "base_1layer" ? 1 : variant == "base_2layers" ? 2 : 0;
    for (int i = 0; i < extra; ++i) {
        net.emplace<LinearLayer>(hidden, hidden);
        net.emplace<ActivationLayer>(ActKind::ReLU);
    }
    net.emplace<LinearLayer>(hidden, classes);
    return net;
}

std::vector<Table1Cell> run_table1(const Table1Options& opt) {
    std::vector<Table1Cell> cells;
    std::vector<std::vector<std::string>> run_rows;
    for (std::size_t n : opt.determinants) {
        const std::size_t classes = std::size_t(1) << n;
        std::vector<Table1Cell> col(opt.variants.size());
        for (std::size_t v = 0; v < opt.variants.size(); ++v) {
            col[v].variant = opt.variants[v];
            col[v].determinant = n;
        }
        for (std::size_t run = 0; run < opt.runs; ++run) {
            const std::uint64_t run_seed = mix64(mix64(opt.seed ^ hash_str("table1")) + n * 1000 + run);
            SyntheticClassSpec spec;
            spec.total_features = opt.features;
            spec.determinant = n;
            spec.train_count = opt.train_count;
            spec.test_count = opt.test_count;
            spec.seed = run_seed;
            const bool need_shared =
                std::find(opt.variants.begin(), opt.variants.end(), "base_no_div") != opt.variants.end();
            ClassDataPair shared, diverged;
            if (need_shared) shared = make_classification_dataset(spec, false);
            diverged = make_classification_dataset(spec, true);

            for (std::size_t v = 0; v < opt.variants.size(); ++v) {
                const std::string& variant = opt.variants[v];
                const ClassDataPair& data = variant == "base_no_div" ? shared : diverged;
                Network net = make_divergence_network(variant, opt.features, opt.hidden, classes);
                net.init_params(mix64(run_seed ^ hash_str("init")));
                TrainOptions topt = opt.train;
                topt.seed = mix64(run_seed ^ hash_str(variant));
                TrainResult tr = train_classifier(net, data.train.features, data.train.labels, topt);
                if (tr.diverged) {
                    ++col[v].diverged_runs;
                    std::fprintf(stderr, "warning: %s N=%zu run %zu diverged (NaN loss); excluded from mean\n",
                                 variant.c_str(), n, run);
                    run_rows.push_back({variant, std::to_string(n), std::to_string(run), "nan", "1"});
                    continue;
                }
                const double acc = 100.0 * accuracy(net, data.test.features, data.test.labels);
                col[v].accuracies.push_back(acc);
                run_rows.push_back({variant, std::to_string(n), std::to_string(run), fmt_double(acc), "0"});
            }
        }
        for (auto& cell : col) {
            if (!cell.accuracies.empty()) {
                double s = 0;
                for (double a : cell.accuracies) s += a;
                cell.mean = s / double(cell.accuracies.size());
                double var = 0;
                for (double a : cell.accuracies) var += (a - cell.mean) * (a - cell.mean);
                cell.stddev = std::sqrt(var / double(cell.accuracies.size()));
            }
            cells.push_back(std::move(cell));
        }
    }
    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        write_csv((fs::path(opt.out_dir) / "table1_runs.csv").string(),
                  "mirrors Table 1 (per-run accuracies, %)", {"variant", "N", "run", "test_accuracy", "diverged"},
                  run_rows);
        std::vector<std::vector<std::string>> sum_rows;
        for (const auto& c : cells)
            sum_rows.push_back({c.variant, std::to_string(c.determinant), fmt_double(c.mean), fmt_double(c.stddev),
                                std::to_string(c.accuracies.size()), std::to_string(c.diverged_runs)});
        write_csv((fs::path(opt.out_dir) / "table1_summary.csv").string(),
                  "mirrors Table 1 (mean +/- std over runs; diverged runs excluded and counted)",
                  {"variant", "N", "mean_accuracy", "std_accuracy", "runs_used", "diverged_runs"}, sum_rows);
    }
    return cells;
}

// ---------------------------------------------------------- power mimicry

namespace {

std::pair<RegressionDataset, RegressionDataset> split_regression(RegressionDataset all, std::size_t train_n) {
    const std::size_t m = all.x.dim(1), total = all.x.dim(0);
    RegressionDataset train, test;
    train.exponents = all.exponents;
    test.exponents = all.exponents;
    train.x = Tensor({train_n, m}, std::vector<double>(all.x.data(), all.x.data() + train_n * m));
    train.y = Tensor({train_n, m}, std::vector<double>(all.y.data(), all.y.data() + train_n * m));
    const std::size_t rest = total - train_n;
    test.x = Tensor({rest, m}, std::vector<double>(all.x.data() + train_n * m, all.x.data() + total * m));
    test.y = Tensor({rest, m}, std::vector<double>(all.y.data() + train_n * m, all.y.data() + total * m));
    return {std::move(train), std::move(test)};
}

} // namespace

std::vector<Table2Cell> run_table2(const Table2Options& opt) {
    std::vector<Table2Cell> cells;
    std::vector<std::vector<std::string>> run_rows;
    for (std::size_t m : opt.input_dims) {
        for (std::size_t h : opt.hidden_sizes) {
            Table2Cell cell;
            cell.input_dim = m;
            cell.hidden = h;
            for (std::size_t run = 0; run < opt.runs; ++run) {
                const std::uint64_t run_seed =
                    mix64(mix64(opt.seed ^ hash_str("table2")) + m * 10000 + h * 10 + run);
                RegressionDataset all = opt.identity_control
                                            ? make_identity_regression_dataset(m, 2 * opt.samples, run_seed)
                                            : make_power_regression_dataset(m, 2 * opt.samples, run_seed);
                auto [train_set, test_set] = split_regression(std::move(all), opt.samples);

                Network net(LossKind::MeanSquaredError);
                net.emplace<LinearLayer>(m, h);
                net.emplace<ActivationLayer>(ActKind::ReLU);
                net.emplace<LinearLayer>(h, m);
                net.init_params(mix64(run_seed ^ hash_str("init")));
                TrainOptions topt = opt.train;
                topt.seed = mix64(run_seed ^ hash_str("train"));
                TrainResult tr = train_regressor(net, train_set.x, train_set.y, topt);
                if (tr.diverged) {
                    std::fprintf(stderr, "warning: table2 M=%zu H=%zu run %zu diverged\n", m, h, run);
                    run_rows.push_back({std::to_string(m), std::to_string(h), std::to_string(run), "nan", "nan"});
                    continue;
                }
                Tensor pred = predict(net, test_set.x);
                RatioStats rs = ratio_metric(pred, test_set.y);
                cell.run_mean.push_back(rs.mean);
                cell.run_std.push_back(rs.stddev);
                run_rows.push_back({std::to_string(m), std::to_string(h), std::to_string(run), fmt_double(rs.mean),
                                    fmt_double(rs.stddev)});
            }
            if (!cell.run_mean.empty()) {
                cell.best_run = std::size_t(std::min_element(cell.run_mean.begin(), cell.run_mean.end()) -
                                            cell.run_mean.begin());
                cell.best_mean = cell.run_mean[cell.best_run];
                cell.best_std = cell.run_std[cell.best_run];
                double s = 0;
                for (double v : cell.run_mean) s += v;
                cell.all_mean = s / double(cell.run_mean.size());
            }
            cells.push_back(std::move(cell));
        }
    }
    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        const char* tag = opt.identity_control ? "identity control" : "power approximation";
        write_csv((fs::path(opt.out_dir) / (opt.identity_control ? "table2_control_runs.csv" : "table2_runs.csv"))
                      .string(),
                  std::string("mirrors Table 2 (per-run ratio R, %; ") + tag + ")",
                  {"M", "hidden", "run", "ratio_mean", "ratio_std"}, run_rows);
        std::vector<std::vector<std::string>> sum_rows;
        for (const auto& c : cells)
            sum_rows.push_back({std::to_string(c.input_dim), std::to_string(c.hidden), fmt_double(c.best_mean),
                                fmt_double(c.best_std), fmt_double(c.all_mean),
                                std::to_string(c.run_mean.size())});
        write_csv(
            (fs::path(opt.out_dir) / (opt.identity_control ? "table2_control_summary.csv" : "table2_summary.csv"))
                .string(),
            std::string("mirrors Table 2 (best run by mean R plus all-run mean; ") + tag + ")",
            {"M", "hidden", "best_ratio_mean", "best_ratio_std", "all_runs_mean", "runs_used"}, sum_rows);
    }
    return cells;
}

// ------------------------------------------------------------------- cnn

namespace {

std::size_t lambda_or_one(std::size_t lambda, std::size_t split_count) {
    return split_count % lambda == 0 ? lambda : 1;
}

} // namespace

Network make_cnn_network(const std::string& variant, std::size_t classes, std::size_t c1, std::size_t c2,
                         std::size_t c3, bool freeze_pow) {
    PowMode mode = PowMode::InChannel;
    std::size_t lambda = 0; // 0 = plain conv
    if (variant != "base") {
        if (variant.rfind("in", 0) == 0)
            mode = PowMode::InChannel;
        else if (variant.rfind("out", 0) == 0)
            mode = PowMode::OutChannel;
        else
            throw ConfigError("unknown cnn variant '" + variant + "'");
        lambda = std::stoul(variant.substr(mode == PowMode::InChannel ? 2 : 3));
        if (lambda == 0) throw ConfigError("Lambda must be >= 1");
    }
    Network net(LossKind::SoftmaxCrossEntropy);
    auto add_conv = [&](std::size_t in, std::size_t out) {
        if (lambda == 0) {
            net.emplace<ConvLayer>(in, out, 3, 3, 1, 1);
        } else {
            // in-channel groups split the output channels, out-channel the inputs
            const std::size_t split = mode == PowMode::InChannel ? out : in;
            const std::size_t lam = lambda_or_one(lambda, split);
            // inputs here are non-negative ([0,1] pixels or pooled ReLU), so
            // the in-channel psi can ignore the mirror branch
            const bool skip_neg = mode == PowMode::InChannel;
            auto layer = std::make_unique<PowConvLayer>(in, out, 3, 3, 1, 1, mode, lam, false, skip_neg);
            layer->freeze_pow() = freeze_pow;
            net.add(std::move(layer));
        }
        net.emplace<BatchNormLayer>(out, true);
        net.emplace<ActivationLayer>(ActKind::ReLU);
        net.emplace<MaxPoolLayer>();
    };
    add_conv(3, c1);
    add_conv(c1, c2);
    add_conv(c2, c3);
    net.emplace<FlattenLayer>();
    net.emplace<LinearLayer>(c3 * 4 * 4, classes);
    return net;
}

CnnTrainResult train_cnn(Network& net, const ImageDataset& train_set, const ImageDataset* test_set,
                         const CnnTrainOptions& opt) {
    CnnTrainResult res;
    std::ofstream log;
    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        log.open(fs::path(opt.out_dir) / "epochs.csv");
        log << "# per-epoch training log (" << opt.variant << ")\nepoch,loss,test_accuracy\n";
    }
    TrainOptions topt = opt.train;
    topt.on_epoch = [&](std::size_t epoch, double loss) {
        double acc = std::nan("");
        if (test_set) {
            acc = 100.0 * accuracy(net, test_set->images, test_set->labels, topt.batch);
            res.epoch_test_acc.push_back(acc);
        }
        if (log.is_open()) {
            log << epoch << "," << fmt_double(loss) << "," << (test_set ? fmt_double(acc) : "") << "\n";
            log.flush();
        }
        if (!opt.out_dir.empty() && std::isfinite(loss)) {
            // last finite checkpoint wins; a NaN epoch aborts before this point
            net.save((fs::path(opt.out_dir) / "checkpoint").string());
        }
        if (opt.train.on_epoch) return opt.train.on_epoch(epoch, loss);
        return true;
    };
    TrainResult tr = train_classifier(net, train_set.images, train_set.labels, topt);
    res.epoch_loss = tr.epoch_loss;
    res.diverged = tr.diverged;
    if (!opt.out_dir.empty()) res.checkpoint_dir = (fs::path(opt.out_dir) / "checkpoint").string();
    return res;
}

// ------------------------------------------------------------ robustness

const std::vector<std::string>& robustness_deformations() {
    static const std::vector<std::string> v{"rotation",     "perspective",      "blur",
                                            "jpeg",         "inpaint",          "salt_pepper",
                                            "random_noise", "structured_noise", "patch_occlude",
                                            "targeted_noise", "targeted_black"};
    return v;
}

DeformSpec eval_spec(const std::string& name, std::uint64_t image_seed) {
    DeformSpec s;
    Rng rng = Rng::stream(image_seed, "eval." + name);
    s.seed = rng.next_u64();
    if (name == "rotation") {
        s.kind = DeformKind::Rotation;
        s.angle = rng.uniform(-15.0, 15.0);
    } else if (name == "perspective") {
        s.kind = DeformKind::Perspective;
        s.displacement = 0.15;
    } else if (name == "blur") {
        s.kind = DeformKind::Blur;
        s.sigma = 1.0;
    } else if (name == "jpeg") {
        s.kind = DeformKind::JpegLike;
        s.quality = 20;
    } else if (name == "inpaint") {
        s.kind = DeformKind::InPaint;
        s.transparency = 0.4;
    } else if (name == "salt_pepper") {
        s.kind = DeformKind::SaltPepper;
        s.rate = 0.2;
        s.drop_sigma = 0.5;
    } else if (name == "random_noise") {
        s.kind = DeformKind::RandomNoise;
        s.noise_sigma = 0.08;
    } else if (name == "structured_noise") {
        s.kind = DeformKind::StructuredNoise;
        s.noise_sigma = 0.15;
    } else if (name == "patch_occlude") {
        s.kind = DeformKind::PatchOcclude;
        s.patch_fraction = 1.0 / 16.0;
    } else if (name == "targeted_noise" || name == "targeted_black") {
        s.kind = DeformKind::TargetedOcclude;
        s.mask = name == "targeted_noise" ? "noise" : "black";
        s.clusters = 3;
        s.cluster_radius = 3;
    } else {
        throw ConfigError("unknown robustness deformation '" + name + "'");
    }
    return s;
}

DeformedCorpus build_deformed_corpus(const ImageDataset& corpus, const std::vector<std::string>& kinds,
                                     std::uint64_t seed, Network* saliency_model) {
    DeformedCorpus dc;
    dc.originals = corpus;
    const std::size_t h = corpus.images.dim(2), w = corpus.images.dim(3);
    std::vector<Image> donors;
    for (std::size_t i = 0; i < std::min<std::size_t>(16, corpus.count()); ++i) donors.push_back(corpus.image(i));
    for (const std::string& name : kinds) {
        if ((name == "targeted_noise" || name == "targeted_black") && !saliency_model) continue;
        Tensor images({corpus.count(), 3, h, w});
        std::vector<std::string> specs(corpus.count());
        for (std::size_t i = 0; i < corpus.count(); ++i) {
            const DeformSpec spec = eval_spec(name, mix64(seed + i));
            Image img = apply_deform(corpus.image(i), spec, &donors, saliency_model, corpus.labels[i]);
            std::copy(img.data.begin(), img.data.end(), images.data() + i * 3 * h * w);
            specs[i] = spec.to_string();
        }
        dc.variant_names.push_back(name);
        dc.variant_images.push_back(std::move(images));
        dc.variant_specs.push_back(std::move(specs));
    }
    return dc;
}

void save_deformed_corpus(const std::string& dir, const DeformedCorpus& dc) {
    save_ppm_dir((fs::path(dir) / "originals").string(), dc.originals);
    std::ofstream manifest(fs::path(dir) / "manifest.tsv");
    if (!manifest) throw DataError("cannot write manifest in " + dir);
    const std::size_t h = dc.originals.images.dim(2), w = dc.originals.images.dim(3);
    for (std::size_t v = 0; v < dc.variant_names.size(); ++v) {
        const fs::path vdir = fs::path(dir) / "deformed" / dc.variant_names[v];
        fs::create_directories(vdir);
        for (std::size_t i = 0; i < dc.originals.count(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "img%06zu.ppm", i);
            Image img(h, w);
            const double* src = dc.variant_images[v].data() + i * 3 * h * w;
            std::copy(src, src + 3 * h * w, img.data.begin());
            write_ppm((vdir / name).string(), img);
            manifest << "originals/" << name << "\t" << dc.variant_specs[v][i] << "\tdeformed/"
                     << dc.variant_names[v] << "/" << name << "\n";
        }
    }
}

DeformedCorpus load_deformed_corpus(const std::string& dir) {
    DeformedCorpus dc;
    dc.originals = load_ppm_dir((fs::path(dir) / "originals").string());
    std::ifstream manifest(fs::path(dir) / "manifest.tsv");
    if (!manifest) throw DataError("missing manifest.tsv in " + dir);
    const std::size_t h = dc.originals.images.dim(2), w = dc.originals.images.dim(3);
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string in_path, spec, out_path;
        if (!std::getline(ls, in_path, '\t') || !std::getline(ls, spec, '\t') || !std::getline(ls, out_path))
            throw DataError("malformed manifest line: " + line);
        // deformed/<kind>/imgNNNNNN.ppm
        const fs::path op(out_path);
        const std::string kind = op.parent_path().filename().string();
        const std::string fname = op.filename().string();
        std::size_t index = 0;
        if (std::sscanf(fname.c_str(), "img%zu.ppm", &index) != 1)
            throw DataError("malformed manifest output name: " + fname);
        std::size_t v = 0;
        for (; v < dc.variant_names.size(); ++v)
            if (dc.variant_names[v] == kind) break;
        if (v == dc.variant_names.size()) {
            dc.variant_names.push_back(kind);
            dc.variant_images.emplace_back(Tensor({dc.originals.count(), 3, h, w}));
            dc.variant_specs.emplace_back(dc.originals.count());
        }
        Image img = read_ppm((fs::path(dir) / out_path).string());
        if (img.height != h || img.width != w) throw DataError("deformed image size mismatch: " + out_path);
        std::copy(img.data.begin(), img.data.end(), dc.variant_images[v].data() + index * 3 * h * w);
        dc.variant_specs[v][index] = spec;
    }
    if (dc.variant_names.empty()) throw DataError("manifest.tsv lists no deformed images");
    return dc;
}

RobustnessReport evaluate_robustness(std::vector<Network>& models, const std::vector<std::string>& model_names,
                                     const DeformedCorpus& dc, std::size_t batch, const std::string& out_path) {
    if (models.empty() || models.size() != model_names.size())
        throw ConfigError("robustness needs >= 1 model with matching names");
    RobustnessReport report;
    const ImageDataset& corpus = dc.originals;

    // evaluation pool: only images every model classifies correctly, undeformed
    std::vector<std::size_t> keep;
    {
        std::vector<std::vector<int>> preds;
        for (auto& m : models) preds.push_back(predict_top1(m, corpus.images, batch));
        for (std::size_t i = 0; i < corpus.count(); ++i) {
            bool all_right = true;
            for (const auto& p : preds)
                if (p[i] != corpus.labels[i]) all_right = false;
            if (all_right) keep.push_back(i);
        }
    }
    if (keep.empty()) throw DataError("robustness filter kept no images");
    report.filtered_count = keep.size();

    std::vector<int> labels(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) labels[i] = corpus.labels[keep[i]];

    for (std::size_t v = 0; v < dc.variant_names.size(); ++v) {
        Tensor deformed = gather_rows(dc.variant_images[v], keep, 0, keep.size());
        for (std::size_t m = 0; m < models.size(); ++m) {
            RobustnessCell cell;
            cell.model = model_names[m];
            cell.deformation = dc.variant_names[v];
            cell.top1_error = 100.0 * topk_error(models[m], deformed, labels, 1, batch);
            cell.top5_error = 100.0 * topk_error(models[m], deformed, labels, 5, batch);
            report.cells.push_back(cell);
        }
    }

    if (!out_path.empty()) {
        std::vector<std::string> cols{"model"};
        for (const auto& n : dc.variant_names) cols.push_back(n + "_top1");
        for (const auto& n : dc.variant_names) cols.push_back(n + "_top5");
        cols.push_back("average_top1");
        std::vector<std::vector<std::string>> rows;
        for (std::size_t m = 0; m < models.size(); ++m) {
            std::vector<std::string> row{model_names[m]};
            double total = 0;
            for (const auto& n : dc.variant_names)
                for (const auto& c : report.cells)
                    if (c.model == model_names[m] && c.deformation == n) {
                        row.push_back(fmt_double(c.top1_error));
                        total += c.top1_error;
                    }
            for (const auto& n : dc.variant_names)
                for (const auto& c : report.cells)
                    if (c.model == model_names[m] && c.deformation == n) row.push_back(fmt_double(c.top5_error));
            row.push_back(fmt_double(total / double(dc.variant_names.size())));
            rows.push_back(std::move(row));
        }
        write_csv(out_path,
                  "mirrors Table 5 (top-1/top-5 error, %, on the all-models-correct pool; " +
                      std::to_string(report.filtered_count) + " images)",
                  cols, rows);
    }
    return report;
}

// ----------------------------------------------------------------- stats

std::vector<LayerDivergence> run_stats(Network& net, const ImageDataset& corpus_a, const ImageDataset& corpus_b,
                                       std::size_t batch, std::size_t value_cap, const std::string& out_path) {
    auto collect = [&](const ImageDataset& ds) {
        std::vector<std::pair<std::string, std::vector<double>>> acc;
        const std::size_t n = ds.count();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t b = 0; b < n; b += batch) {
            const std::size_t end = std::min(n, b + batch);
            std::vector<std::pair<std::string, Tensor>> rec;
            net.forward_record(gather_rows(ds.images, idx, b, end), rec);
            if (acc.empty())
                for (const auto& [name, t] : rec) acc.emplace_back(name, std::vector<double>{});
            for (std::size_t l = 0; l < rec.size(); ++l) {
                auto& dst = acc[l].second;
                const Tensor& t = rec[l].second;
                const std::size_t room = value_cap > dst.size() ? value_cap - dst.size() : 0;
                const std::size_t take = std::min(room, t.size());
                dst.insert(dst.end(), t.data(), t.data() + take);
            }
        }
        return acc;
    };
    auto dump_a = collect(corpus_a);
    auto dump_b = collect(corpus_b);
    if (dump_a.size() != dump_b.size()) throw DataError("stats: layer dumps have different layer counts");

    std::vector<LayerDivergence> out;
    for (std::size_t l = 0; l < dump_a.size(); ++l) {
        if (dump_a[l].first != dump_b[l].first) throw DataError("stats: layer name mismatch at index " + std::to_string(l));
        LayerDivergence ld;
        ld.layer = dump_a[l].first;
        ld.a = dist_moments(dump_a[l].second);
        ld.b = dist_moments(dump_b[l].second);
        // shared histogram over the pooled range
        const auto [min_a, max_a] = std::minmax_element(dump_a[l].second.begin(), dump_a[l].second.end());
        const auto [min_b, max_b] = std::minmax_element(dump_b[l].second.begin(), dump_b[l].second.end());
        const double lo = std::min(*min_a, *min_b), hi = std::max(*max_a, *max_b);
        Histogram ha = make_histogram(dump_a[l].second, lo, hi, 100);
        Histogram hb = make_histogram(dump_b[l].second, lo, hi, 100);
        ld.jsd = js_divergence(ha, hb);
        out.push_back(std::move(ld));
    }

    if (!out_path.empty()) {
        std::vector<std::vector<std::string>> rows;
        for (const auto& ld : out)
            rows.push_back({ld.layer, fmt_double(ld.a.mean), fmt_double(ld.a.variance), fmt_double(ld.a.skewness),
                            fmt_double(ld.a.excess_kurtosis), fmt_double(ld.b.mean), fmt_double(ld.b.variance),
                            fmt_double(ld.b.skewness), fmt_double(ld.b.excess_kurtosis), fmt_double(ld.jsd)});
        write_csv(out_path, "per-layer activation statistics and Jensen-Shannon divergence (Figures 1-2 style)",
                  {"layer", "a_mean", "a_variance", "a_skewness", "a_excess_kurtosis", "b_mean", "b_variance",
                   "b_skewness", "b_excess_kurtosis", "jsd"},
                  rows);
    }
    return out;
}

} // namespace pcnn

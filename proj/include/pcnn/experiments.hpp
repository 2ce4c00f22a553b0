#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pcnn/config.hpp"
#include "pcnn/datasets.hpp"
#include "pcnn/deform.hpp"
#include "pcnn/synthdata.hpp"
#include "pcnn/trainer.hpp"

namespace pcnn {

// ------------------------------------------------------------- divergence

/// Two-layer 128-hidden-unit network with the variant's input stage.
/// Variants: base_no_div, base, bn_only, bn_trans, base_1layer, base_2layers,
/// tanh, softsign, power.
Network make_divergence_network(const std::string& variant, std::size_t features, std::size_t hidden,
                                std::size_t classes);
const std::vector<std::string>& divergence_variants();

struct Table1Options {
    std::vector<std::size_t> determinants{1, 2, 4, 8};
    std::vector<std::string> variants = divergence_variants();
    std::size_t runs = 10;
    std::uint64_t seed = 0;
    std::size_t features = 128, hidden = 128;
    std::size_t train_count = 10000, test_count = 10000;
    TrainOptions train; // epochs/batch/optim
    std::string out_dir;
};

struct Table1Cell {
    std::string variant;
    std::size_t determinant = 1;
    std::vector<double> accuracies; // percent, one per finished run
    std::size_t diverged_runs = 0;
    double mean = 0.0, stddev = 0.0;
};

std::vector<Table1Cell> run_table1(const Table1Options& opt);

// ---------------------------------------------------------- power mimicry

struct Table2Options {
    std::vector<std::size_t> input_dims{16, 64, 256};
    std::vector<std::size_t> hidden_sizes{64, 256, 1024};
    std::size_t runs = 10;
    std::uint64_t seed = 0;
    std::size_t samples = 10000; // train and test each
    TrainOptions train;
    std::string out_dir;
    bool identity_control = false; // exponents forced to 1
};

struct Table2Cell {
    std::size_t input_dim = 0, hidden = 0;
    std::vector<double> run_mean, run_std; // ratio percent per run
    std::size_t best_run = 0;              // smallest mean R
    double best_mean = 0.0, best_std = 0.0;
    double all_mean = 0.0; // mean of run means
};

std::vector<Table2Cell> run_table2(const Table2Options& opt);

// ------------------------------------------------------------------- cnn

/// "base", "in1".."in8" (in-channel, Lambda suffix), "out2".."out8".
/// For out-channel layers whose input channel count Lambda cannot divide
/// (the RGB stem), that layer falls back to Lambda = 1.
Network make_cnn_network(const std::string& variant, std::size_t classes, std::size_t c1 = 16, std::size_t c2 = 32,
                         std::size_t c3 = 64, bool freeze_pow = false);

struct CnnTrainOptions {
    std::string variant = "base";
    std::size_t classes = 10;
    std::size_t c1 = 16, c2 = 32, c3 = 64;
    bool freeze_pow = false;
    TrainOptions train;
    std::string out_dir; // checkpoint + per-epoch csv when set
};

struct CnnTrainResult {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_test_acc; // empty when no test set given
    bool diverged = false;
    std::string checkpoint_dir;
};

CnnTrainResult train_cnn(Network& net, const ImageDataset& train_set, const ImageDataset* test_set,
                         const CnnTrainOptions& opt);

// ------------------------------------------------------------ robustness

const std::vector<std::string>& robustness_deformations(); // Table 5 column set

/// Per-image deformation spec with the natural per-image randomization
/// (rotation angle and all seeds derive from image_seed).
DeformSpec eval_spec(const std::string& name, std::uint64_t image_seed);

struct DeformedCorpus {
    ImageDataset originals;
    // deformation name -> images aligned with originals, plus the spec line
    // recorded for each image (the reproducibility manifest)
    std::vector<std::string> variant_names;
    std::vector<Tensor> variant_images;
    std::vector<std::vector<std::string>> variant_specs;
};

/// Applies every named deformation to every image. Targeted occlusion reads
/// the saliency of `saliency_model` (skipped when null).
DeformedCorpus build_deformed_corpus(const ImageDataset& corpus, const std::vector<std::string>& kinds,
                                     std::uint64_t seed, Network* saliency_model);

/// On-disk layout: originals/ (PPM + labels.txt), deformed/<kind>/ (PPM),
/// manifest.tsv lines "<input>\t<spec>\t<output>".
void save_deformed_corpus(const std::string& dir, const DeformedCorpus& dc);
DeformedCorpus load_deformed_corpus(const std::string& dir);

struct RobustnessCell {
    std::string model, deformation;
    double top1_error = 0.0, top5_error = 0.0;
};

struct RobustnessReport {
    std::size_t filtered_count = 0; // images all models get right, undeformed
    std::vector<RobustnessCell> cells;
};

RobustnessReport evaluate_robustness(std::vector<Network>& models, const std::vector<std::string>& model_names,
                                     const DeformedCorpus& dc, std::size_t batch = 128,
                                     const std::string& out_path = "");

// ----------------------------------------------------------------- stats

struct LayerDivergence {
    std::string layer;
    DistStats a, b;
    double jsd = 0.0;
};

/// Per-layer activation statistics of two corpora through one model, plus
/// their Jensen-Shannon divergence on pooled-range histograms.
std::vector<LayerDivergence> run_stats(Network& net, const ImageDataset& corpus_a, const ImageDataset& corpus_b,
                                       std::size_t batch = 128, std::size_t value_cap = 200000,
                                       const std::string& out_path = "");

// ------------------------------------------------------------- gradcheck

struct GradCheckItem {
    std::string name;
    std::size_t instances = 0;
    double max_rel_err = 0.0;
    double tolerance = 1e-5;
    bool pass = false;
};

/// The full finite-difference suite (psi, both powered-convolution modes for
/// Lambda in {1,2,4}, batch norm, activations, linear, both loss heads, and a
/// joint full-network direction).
std::vector<GradCheckItem> run_gradcheck(std::uint64_t seed = 0, std::size_t instances = 100);

// -------------------------------------------------------------- csv utils

void write_csv(const std::string& path, const std::string& header_comment,
               const std::vector<std::string>& columns, const std::vector<std::vector<std::string>>& rows);
std::string fmt_double(double v);

} // namespace pcnn

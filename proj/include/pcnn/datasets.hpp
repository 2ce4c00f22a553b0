#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcnn/image.hpp"
#include "pcnn/tensor.hpp"

namespace pcnn {

struct ImageDataset {
    Tensor images; // [N, 3, H, W], values in [0,1]
    std::vector<int> labels;
    std::size_t classes = 10;

    std::size_t count() const { return labels.size(); }
    Image image(std::size_t i) const;
};

/// CIFAR-10 binary records: 1 label byte + 3072 pixel bytes (R, G, B planes
/// of a 32x32 image). limit = 0 reads the whole file.
ImageDataset load_cifar_bin(const std::string& path, std::size_t limit = 0);
void save_cifar_bin(const std::string& path, const ImageDataset& ds);

/// Directory of PPM images plus labels.txt lines "<filename> <label>".
ImageDataset load_ppm_dir(const std::string& dir);
void save_ppm_dir(const std::string& dir, const ImageDataset& ds);

/// Class-conditional synthetic corpus in the CIFAR shape: each class owns a
/// smooth seeded template field; samples are brightness/contrast-jittered,
/// noisy draws of their template. Stands in for CIFAR-10 when the real
/// dataset is not on disk.
ImageDataset make_synthetic_corpus(std::size_t n, std::size_t classes, std::size_t size, std::uint64_t seed);

/// Deterministic class-stratified prefix subset.
ImageDataset subset(const ImageDataset& ds, std::size_t n);

} // namespace pcnn

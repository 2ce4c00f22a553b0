#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pcnn/image.hpp"
#include "pcnn/network.hpp"

namespace pcnn {

enum class DeformKind {
    Rotation,
    Perspective,
    Blur,
    JpegLike,
    SaltPepper,
    RandomNoise,
    StructuredNoise,
    InPaint,
    PatchOcclude,
    TargetedOcclude,
};

std::string deform_kind_name(DeformKind k);
DeformKind deform_kind_from(const std::string& name);

/// Tagged description of one deformation; every generator is a pure function
/// of (image, spec), so a recorded spec reproduces its output bit for bit.
struct DeformSpec {
    DeformKind kind = DeformKind::Rotation;
    double angle = 10.0;            // rotation, degrees, |angle| <= 15
    double displacement = 0.15;     // perspective: corner shift bound, fraction of extent
    double sigma = 1.0;             // blur kernel stddev
    int quality = 30;               // jpeg quality 1..100
    double rate = 0.2;              // salt & pepper pixel fraction, <= 0.2
    double drop_sigma = 0.5;        // salt & pepper replacement stddev
    double noise_sigma = 0.1;       // random / structured noise scale
    double transparency = 0.5;      // inpaint: 1 = fully transparent
    double patch_fraction = 0.25;   // patch occlusion area fraction, >= 1/64
    std::string mask = "black";     // targeted occlusion: black | noise
    int clusters = 3;               // targeted occlusion cluster count
    int cluster_radius = 4;         // targeted occlusion disc/NMS radius
    std::uint64_t seed = 0;

    std::string to_string() const;           // "kind k=v k=v ..."
    static DeformSpec parse(const std::string& text);
};

// ---- generators (Fig. 3 a-l) ----

Image rotate(const Image& img, double angle_deg);
Image perspective_warp(const Image& img, std::uint64_t seed, double displacement_bound);
/// Warp mapping the image corners onto the given points (y, x order,
/// top-left/top-right/bottom-right/bottom-left).
Image perspective_warp_to(const Image& img, const std::array<std::array<double, 2>, 4>& base_points);
Image gaussian_blur(const Image& img, double sigma);
Image jpeg_like_compress(const Image& img, int quality);
Image salt_pepper(const Image& img, double rate, double drop_sigma, std::uint64_t seed);
Image random_noise(const Image& img, double sigma, std::uint64_t seed);
Image structured_noise(const Image& img, double sigma, std::uint64_t seed);
Image inpaint_strings(const Image& img, double transparency, std::uint64_t seed, double coverage_lo = 0.05,
                      double coverage_hi = 0.25);
Image patch_occlude(const Image& img, const std::vector<Image>& donors, double fraction, std::uint64_t seed);

/// |d logit_class / d pixel|, max over channels, normalized to [0,1].
/// A zero gradient field comes back as an all-zero map.
Tensor saliency_map(Network& net, const Image& img, int class_id);

Image targeted_occlude(const Image& img, const Tensor& saliency, const std::string& mask_type, int clusters,
                       int cluster_radius, std::uint64_t seed);

/// Dispatch one spec (donors only consulted for PatchOcclude; net only for
/// TargetedOcclude).
Image apply_deform(const Image& img, const DeformSpec& spec, const std::vector<Image>* donors = nullptr,
                   Network* net = nullptr, int class_id = 0);

/// Named mixed chains from the detection experiments: light = in-paint +
/// random noise; heavy adds salt & pepper, blur, and jpeg.
std::vector<DeformSpec> mix_chain(const std::string& name, std::uint64_t seed);

} // namespace pcnn

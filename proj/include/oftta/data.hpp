#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oftta/tensor.hpp"

namespace oftta {

// Per-subject labeled windows. Each window is a flat H x W slice (row-major,
// H time steps by W sensor axes) that becomes a (1, 1, H, W) tensor at batch
// assembly time.
struct DomainDataset {
    int subject = 0;
    int class_count = 0;
    int height = 0, width = 0;
    std::vector<std::vector<float>> windows;
    std::vector<int> labels; // 0-based

    std::size_t size() const { return windows.size(); }
};

struct SyntheticSpec {
    int classes = 6;
    int axes = 3;
    int window_len = 128;
    int subjects = 4;
    int samples_per_class = 20; // per (subject, class)
    double gain_log_sigma = 0.4;
    double offset_sigma = 0.5;
    double noise_sigma = 0.2;
    std::uint64_t seed = 1;
};

struct AxisStats {
    std::vector<float> mean, stddev; // per sensor axis
};

// Standard sliding-window segmentation; stride = floor(H * (1 - overlap)),
// clamped to >= 1; trailing remainder shorter than H is dropped.
std::vector<std::vector<float>> sliding_window(const std::vector<float>& series,
                                               int t_total, int width, int window_h,
                                               double overlap);

// Per-axis moments pooled over the given datasets (the source split).
AxisStats compute_axis_stats(const std::vector<const DomainDataset*>& sources);

// Z-score per sensor axis using source-training statistics; a zero-std axis
// passes through unscaled.
void standardize(DomainDataset& domain, const AxisStats& stats);

// Per-subject affine covariate shift over class-dependent waveforms:
// clean signal s_c(t) = sin(2*pi*f_k*t/T + c*pi/4) + 0.5*sin(4*pi*f_k*t/T)
// with f_k = 2 + k (1-based class k); subject draws per-axis gain
// g ~ LogNormal(0, gain_log_sigma) and offset b ~ Normal(0, offset_sigma)
// once; each sample adds iid Normal(0, noise_sigma). Deterministic per seed.
std::vector<DomainDataset> generate_synthetic(const SyntheticSpec& spec);

// Loads the official UCI-HAR inertial-signal distribution: train and test
// pools merged, grouped by subject, archive subjects 1-5 mapped to domains
// 0-4, the 9 signals stacked as W=9 axes of 128-step windows.
std::vector<DomainDataset> load_uci_har(const std::string& root);

// UCI-like on-disk layout for synthetic corpora (round-trips bit-exactly).
void save_corpus(const std::string& dir, const std::vector<DomainDataset>& domains);
std::vector<DomainDataset> load_corpus(const std::string& dir);

} // namespace oftta

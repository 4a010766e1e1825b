#include "oftta/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace oftta {

std::vector<std::vector<float>> sliding_window(const std::vector<float>& series,
                                               int t_total, int width, int window_h,
                                               double overlap) {
    if (overlap < 0.0 || overlap >= 1.0)
        throw std::invalid_argument("sliding_window: overlap must be in [0,1)");
    if (static_cast<std::size_t>(t_total) * width != series.size())
        throw std::invalid_argument("sliding_window: series length mismatch");
    std::vector<std::vector<float>> out;
    if (t_total < window_h) return out; // empty result, caller may warn
    const int stride =
        std::max(1, static_cast<int>(window_h * (1.0 - overlap)));
    for (int start = 0; start + window_h <= t_total; start += stride) {
        std::vector<float> seg(static_cast<std::size_t>(window_h) * width);
        std::copy_n(series.begin() + static_cast<std::size_t>(start) * width,
                    seg.size(), seg.begin());
        out.push_back(std::move(seg));
    }
    return out;
}

AxisStats compute_axis_stats(const std::vector<const DomainDataset*>& sources) {
    if (sources.empty())
        throw std::invalid_argument("compute_axis_stats: no source domains");
    const int w = sources[0]->width;
    std::vector<double> sum(w, 0.0), sq(w, 0.0);
    std::size_t count = 0;
    for (const auto* d : sources) {
        if (d->width != w)
            throw std::invalid_argument("compute_axis_stats: axis count mismatch");
        for (const auto& win : d->windows) {
            const int h = d->height;
            for (int t = 0; t < h; ++t)
                for (int a = 0; a < w; ++a) {
                    const double v = win[static_cast<std::size_t>(t) * w + a];
                    sum[a] += v;
                    sq[a] += v * v;
                }
            count += h;
        }
    }
    AxisStats stats;
    stats.mean.resize(w);
    stats.stddev.resize(w);
    for (int a = 0; a < w; ++a) {
        const double mu = sum[a] / count;
        const double var = std::max(0.0, sq[a] / count - mu * mu);
        stats.mean[a] = static_cast<float>(mu);
        stats.stddev[a] = static_cast<float>(std::sqrt(var));
    }
    return stats;
}

void standardize(DomainDataset& domain, const AxisStats& stats) {
    const int w = domain.width;
    if (static_cast<int>(stats.mean.size()) != w)
        throw std::invalid_argument("standardize: axis count mismatch");
    for (auto& win : domain.windows)
        for (int t = 0; t < domain.height; ++t)
            for (int a = 0; a < w; ++a) {
                float& v = win[static_cast<std::size_t>(t) * w + a];
                if (stats.stddev[a] > 0.0f)
                    v = (v - stats.mean[a]) / stats.stddev[a];
                // zero-std axis: passthrough
            }
}

std::vector<DomainDataset> generate_synthetic(const SyntheticSpec& spec) {
    if (spec.subjects < 2)
        throw std::invalid_argument("generate_synthetic: need >= 2 subjects");
    if (spec.gain_log_sigma < 0 || spec.offset_sigma < 0 || spec.noise_sigma < 0)
        throw std::invalid_argument("generate_synthetic: negative sigma");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    std::vector<DomainDataset> out;
    const int t_len = spec.window_len;
    const int axes = spec.axes;
    const double pi = 3.14159265358979323846;
    for (int d = 0; d < spec.subjects; ++d) {
        DomainDataset dom;
        dom.subject = d;
        dom.class_count = spec.classes;
        dom.height = t_len;
        dom.width = axes;
        std::vector<double> gain(axes), offset(axes);
        for (int a = 0; a < axes; ++a) {
            gain[a] = std::exp(unit_normal(rng) * spec.gain_log_sigma);
            offset[a] = unit_normal(rng) * spec.offset_sigma;
        }
        for (int k = 1; k <= spec.classes; ++k) {
            const double freq = 2.0 + k;
            for (int s = 0; s < spec.samples_per_class; ++s) {
                std::vector<float> win(static_cast<std::size_t>(t_len) * axes);
                for (int t = 0; t < t_len; ++t) {
                    const double base = 2.0 * pi * freq * t / t_len;
                    for (int a = 0; a < axes; ++a) {
                        const double clean = std::sin(base + a * pi / 4.0) +
                                             0.5 * std::sin(2.0 * base);
                        double v = gain[a] * clean + offset[a];
                        if (spec.noise_sigma > 0.0)
                            v += unit_normal(rng) * spec.noise_sigma;
                        win[static_cast<std::size_t>(t) * axes + a] =
                            static_cast<float>(v);
                    }
                }
                dom.windows.push_back(std::move(win));
                dom.labels.push_back(k - 1);
            }
        }
        out.push_back(std::move(dom));
    }
    return out;
}

namespace {

// One value per line-token; rows must all have `cols` entries.
std::vector<std::vector<float>> read_float_rows(const fs::path& file, int cols) {
    std::ifstream in(file);
    if (!in)
        throw std::runtime_error("data: missing file " + file.string());
    std::vector<std::vector<float>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ss(line);
        std::vector<float> row;
        float v;
        while (ss >> v) row.push_back(v);
        if (static_cast<int>(row.size()) != cols)
            throw std::runtime_error("data: " + file.string() + " line " +
                                     std::to_string(lineno) + " has " +
                                     std::to_string(row.size()) + " values, expected " +
                                     std::to_string(cols));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<int> read_int_column(const fs::path& file) {
    std::ifstream in(file);
    if (!in)
        throw std::runtime_error("data: missing file " + file.string());
    std::vector<int> out;
    int v;
    while (in >> v) out.push_back(v);
    return out;
}

struct RawSplit {
    std::vector<std::vector<std::vector<float>>> signals; // [axis][row][t]
    std::vector<int> labels;
    std::vector<int> subjects;
};

RawSplit load_split(const fs::path& split_dir, const std::vector<std::string>& names,
                    const std::string& suffix, int window_h, int label_max) {
    RawSplit raw;
    for (const auto& n : names)
        raw.signals.push_back(
            read_float_rows(split_dir / "Inertial Signals" / (n + suffix + ".txt"),
                            window_h));
    raw.labels = read_int_column(split_dir / ("y" + suffix + ".txt"));
    raw.subjects = read_int_column(split_dir / ("subject" + suffix + ".txt"));
    const std::size_t rows = raw.signals[0].size();
    for (std::size_t a = 1; a < raw.signals.size(); ++a)
        if (raw.signals[a].size() != rows)
            throw std::runtime_error("data: signal row counts differ in " +
                                     split_dir.string());
    if (raw.labels.size() != rows || raw.subjects.size() != rows)
        throw std::runtime_error("data: label/subject row counts differ in " +
                                 split_dir.string());
    for (std::size_t i = 0; i < raw.labels.size(); ++i)
        if (raw.labels[i] < 1 || raw.labels[i] > label_max)
            throw std::runtime_error("data: label out of [1," +
                                     std::to_string(label_max) + "] in " +
                                     (split_dir / ("y" + suffix + ".txt")).string() +
                                     " line " + std::to_string(i + 1));
    return raw;
}

std::vector<DomainDataset>
assemble_domains(const std::vector<RawSplit>& splits, int window_h, int axes,
                 int class_count, const std::vector<int>& keep_subjects) {
    std::map<int, DomainDataset> by_subject;
    for (const auto& raw : splits) {
        for (std::size_t r = 0; r < raw.labels.size(); ++r) {
            const int subj = raw.subjects[r];
            if (!keep_subjects.empty() &&
                std::find(keep_subjects.begin(), keep_subjects.end(), subj) ==
                    keep_subjects.end())
                continue;
            auto& dom = by_subject[subj];
            if (dom.windows.empty()) {
                dom.subject = subj;
                dom.class_count = class_count;
                dom.height = window_h;
                dom.width = axes;
            }
            std::vector<float> win(static_cast<std::size_t>(window_h) * axes);
            for (int t = 0; t < window_h; ++t)
                for (int a = 0; a < axes; ++a)
                    win[static_cast<std::size_t>(t) * axes + a] =
                        raw.signals[a][r][t];
            dom.windows.push_back(std::move(win));
            dom.labels.push_back(raw.labels[r] - 1);
        }
    }
    std::vector<DomainDataset> out;
    for (auto& [subj, dom] : by_subject) out.push_back(std::move(dom));
    return out;
}

const std::vector<std::string> kUciSignals = {
    "body_acc_x", "body_acc_y", "body_acc_z",
    "body_gyro_x", "body_gyro_y", "body_gyro_z",
    "total_acc_x", "total_acc_y", "total_acc_z"};

void write_float_rows(const fs::path& file,
                      const std::vector<std::vector<float>>& rows) {
    std::ofstream out(file);
    if (!out)
        throw std::runtime_error("data: cannot write " + file.string());
    char buf[32];
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(row[i]));
            if (i) out << ' ';
            out << buf;
        }
        out << '\n';
    }
}

} // namespace

std::vector<DomainDataset> load_uci_har(const std::string& root) {
    const fs::path base(root);
    std::vector<RawSplit> splits;
    splits.push_back(load_split(base / "train", kUciSignals, "_train", 128, 6));
    splits.push_back(load_split(base / "test", kUciSignals, "_test", 128, 6));
    // Archive subjects 1-5 become domain ids 0-4.
    auto domains = assemble_domains(splits, 128, 9, 6, {1, 2, 3, 4, 5});
    for (auto& d : domains) d.subject -= 1;
    return domains;
}

void save_corpus(const std::string& dir, const std::vector<DomainDataset>& domains) {
    if (domains.empty())
        throw std::invalid_argument("save_corpus: no domains");
    const fs::path base(dir);
    const fs::path sig_dir = base / "train" / "Inertial Signals";
    fs::create_directories(sig_dir);
    const int h = domains[0].height;
    const int w = domains[0].width;
    std::ofstream meta(base / "meta.txt");
    if (!meta)
        throw std::runtime_error("save_corpus: cannot write to " + dir);
    meta << "classes " << domains[0].class_count << "\n"
         << "window " << h << "\n"
         << "axes " << w << "\n";
    for (int a = 0; a < w; ++a) {
        std::vector<std::vector<float>> rows;
        for (const auto& dom : domains)
            for (const auto& win : dom.windows) {
                std::vector<float> row(h);
                for (int t = 0; t < h; ++t)
                    row[t] = win[static_cast<std::size_t>(t) * w + a];
                rows.push_back(std::move(row));
            }
        write_float_rows(sig_dir / ("signal_" + std::to_string(a) + "_train.txt"),
                         rows);
    }
    std::ofstream ys(base / "train" / "y_train.txt");
    std::ofstream subs(base / "train" / "subject_train.txt");
    for (const auto& dom : domains)
        for (std::size_t i = 0; i < dom.labels.size(); ++i) {
            ys << dom.labels[i] + 1 << '\n';
            subs << dom.subject << '\n';
        }
}

std::vector<DomainDataset> load_corpus(const std::string& dir) {
    const fs::path base(dir);
    std::ifstream meta(base / "meta.txt");
    if (!meta)
        throw std::runtime_error("load_corpus: missing " + (base / "meta.txt").string());
    int classes = 0, window = 0, axes = 0;
    std::string key;
    while (meta >> key) {
        if (key == "classes") meta >> classes;
        else if (key == "window") meta >> window;
        else if (key == "axes") meta >> axes;
        else throw std::runtime_error("load_corpus: unknown meta key '" + key + "'");
    }
    if (classes < 1 || window < 1 || axes < 1)
        throw std::runtime_error("load_corpus: incomplete meta.txt in " + dir);
    std::vector<std::string> names;
    for (int a = 0; a < axes; ++a) names.push_back("signal_" + std::to_string(a));
    // Synthetic subject ids are already 0-based; keep every subject.
    std::vector<RawSplit> splits;
    splits.push_back(load_split(base / "train", names, "_train", window, classes));
    return assemble_domains(splits, window, axes, classes, {});
}

} // namespace oftta

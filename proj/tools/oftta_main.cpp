// Command-line harness: train source checkpoints, run streaming adaptation
// protocols, benchmark methods, and generate synthetic corpora.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oftta/data.hpp"
#include "oftta/network.hpp"
#include "oftta/trainer.hpp"
#include "oftta/tta.hpp"
#include "oftta/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace oftta;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Thrown for non-finite results so main can map them to exit code 4.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetOptions {
    std::string dataset = "synthetic"; // synthetic | uci-har
    std::string data_root;             // corpus dir or UCI root
    SyntheticSpec spec;                // used when generating in-memory
};

struct TrainOptions {
    DatasetOptions data;
    std::string protocol = "looa"; // looa | ctta
    std::string out = "runs";
    TrainConfig config;
    std::vector<int> channels = {64, 128, 256};
    int kernel_h = 6;
    int pool_h = 2;
};

struct AdaptOptions {
    DatasetOptions data;
    std::string protocol = "looa"; // looa | ctta | bs1
    std::string method = "oftta";
    std::string models = "runs";
    std::string out = "runs";
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    AdaptationConfig config;
};

struct BenchOptions {
    DatasetOptions data;
    std::string models = "runs";
    std::string out = "runs";
    std::vector<std::string> methods = {"erm", "bn", "t3a", "alpha-bn", "oftta"};
    int repetitions = 5;
    AdaptationConfig config;
};

std::string resolve_data_root(const DatasetOptions& opts) {
    if (!opts.data_root.empty()) return opts.data_root;
    if (const char* env = std::getenv("OFTTA_DATA_ROOT")) return env;
    return "";
}

std::vector<DomainDataset> load_domains(const DatasetOptions& opts) {
    const std::string root = resolve_data_root(opts);
    if (opts.dataset == "uci-har") {
        if (root.empty())
            throw std::invalid_argument(
                "uci-har requires --data-root or OFTTA_DATA_ROOT");
        return load_uci_har(root);
    }
    if (opts.dataset == "synthetic") {
        if (!root.empty() && fs::exists(fs::path(root) / "meta.txt"))
            return load_corpus(root);
        return generate_synthetic(opts.spec);
    }
    throw std::invalid_argument("unknown dataset '" + opts.dataset +
                                "' (expected synthetic or uci-har)");
}

std::vector<const DomainDataset*> complement(const std::vector<DomainDataset>& all,
                                             std::size_t held_out) {
    std::vector<const DomainDataset*> out;
    for (std::size_t i = 0; i < all.size(); ++i)
        if (i != held_out) out.push_back(&all[i]);
    return out;
}

fs::path fold_model_path(const std::string& dir, const std::string& protocol,
                         std::size_t index) {
    const std::string stem =
        protocol == "ctta" ? "model_source" : "model_fold";
    return fs::path(dir) / (stem + std::to_string(index) + ".oftta");
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

struct SeedStats {
    double mean = 0.0, stddev = 0.0;
};

SeedStats seed_stats(const std::vector<double>& xs) {
    SeedStats s;
    for (double x : xs) s.mean += x;
    s.mean /= xs.size();
    for (double x : xs) s.stddev += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(s.stddev / xs.size());
    return s;
}

void write_records(const fs::path& file, const StreamResult& result) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    for (const auto& b : result.batches) {
        json rec;
        rec["batch"] = b.index;
        rec["predictions"] = b.predictions;
        rec["labels"] = b.labels;
        rec["entropy"] = b.mean_entropy;
        rec["ms"] = b.elapsed_ms;
        out << rec.dump() << "\n";
    }
}

ArchSpec arch_for(const TrainOptions& opts, const DomainDataset& sample) {
    ArchSpec arch;
    arch.in_h = sample.height;
    arch.in_w = sample.width;
    arch.kernel_h = opts.kernel_h;
    arch.kernel_w = 1;
    arch.channels = opts.channels;
    arch.pool_h = opts.pool_h;
    arch.pool_w = 1;
    arch.classes = sample.class_count;
    return arch;
}

int cmd_train(const TrainOptions& opts) {
    auto domains = load_domains(opts.data);
    if (domains.size() < 2)
        throw std::invalid_argument("training needs at least 2 domains");
    fs::create_directories(opts.out);
    const ArchSpec arch = arch_for(opts, domains[0]);

    // One job per checkpoint: LOOA holds one domain out, CTTA trains on one
    // source domain alone. Jobs are independent, run them in parallel.
    auto job = [&](std::size_t i) {
        std::vector<const DomainDataset*> sources;
        if (opts.protocol == "ctta") sources = {&domains[i]};
        else sources = complement(domains, i);

        const AxisStats norm = compute_axis_stats(sources);
        std::vector<DomainDataset> owned;
        owned.reserve(sources.size());
        for (const auto* s : sources) {
            owned.push_back(*s);
            standardize(owned.back(), norm);
        }
        std::vector<const DomainDataset*> standardized;
        for (const auto& s : owned) standardized.push_back(&s);

        const Checkpoint ck = train_erm(standardized, arch, opts.config);
        SavedModel saved;
        saved.model = ck.model;
        saved.norm = norm;
        saved.has_norm = true;
        const fs::path file = fold_model_path(opts.out, opts.protocol, i);
        save_model(file.string(), saved);
        return std::make_pair(file.string(), ck.validation_loss);
    };

    std::vector<std::future<std::pair<std::string, double>>> futures;
    for (std::size_t i = 0; i < domains.size(); ++i)
        futures.push_back(std::async(std::launch::async, job, i));
    for (auto& f : futures) {
        const auto [file, vloss] = f.get();
        std::cout << "wrote " << file << " (validation loss " << fmt(vloss)
                  << ")\n";
    }
    return kExitOk;
}

DomainDataset standardized_copy(const DomainDataset& domain, const SavedModel& saved) {
    DomainDataset copy = domain;
    if (saved.has_norm) standardize(copy, saved.norm);
    return copy;
}

int cmd_adapt(const AdaptOptions& opts) {
    auto domains = load_domains(opts.data);
    fs::create_directories(opts.out);
    AdaptationConfig base = opts.config;
    base.method = method_from_name(opts.method);
    if (opts.protocol == "bs1") base.batch_size = 1;
    else if (opts.protocol != "looa" && opts.protocol != "ctta")
        throw std::invalid_argument("unknown protocol '" + opts.protocol +
                                    "' (expected looa, ctta, or bs1)");
    const bool ctta = opts.protocol == "ctta";

    // Load every checkpoint up front so mismatches fail before any work.
    std::vector<SavedModel> models;
    for (std::size_t i = 0; i < domains.size(); ++i) {
        const fs::path file =
            fold_model_path(opts.models, ctta ? "ctta" : "looa", i);
        models.push_back(load_model(file.string()));
        if (models.back().model.class_count != domains[i].class_count)
            throw std::invalid_argument("checkpoint " + file.string() +
                                        " does not match the dataset classes");
    }

    struct Cell {
        std::vector<double> acc, f1, entropy;
    };
    std::vector<Cell> per_domain(domains.size());
    Cell overall;

    auto run_fold = [&](std::size_t fold, std::uint64_t seed) {
        AdaptationConfig cfg = base;
        cfg.seed = seed;
        std::vector<StreamResult> results;
        std::vector<std::size_t> result_domains;
        if (ctta) {
            std::vector<DomainDataset> targets;
            for (std::size_t d = 0; d < domains.size(); ++d)
                if (d != fold)
                    targets.push_back(standardized_copy(domains[d], models[fold]));
            std::vector<const DomainDataset*> target_ptrs;
            for (const auto& t : targets) target_ptrs.push_back(&t);
            CttaResult r = run_ctta(models[fold].model, target_ptrs, cfg);
            std::size_t slot = 0;
            for (std::size_t d = 0; d < domains.size(); ++d)
                if (d != fold) {
                    results.push_back(std::move(r.per_domain[slot++]));
                    result_domains.push_back(d);
                }
        } else {
            const DomainDataset target =
                standardized_copy(domains[fold], models[fold]);
            results.push_back(run_stream(models[fold].model, target, cfg));
            result_domains.push_back(fold);
        }
        for (std::size_t i = 0; i < results.size(); ++i) {
            const std::string tag = ctta ? "source" + std::to_string(fold) +
                                               "_target" +
                                               std::to_string(result_domains[i])
                                         : "fold" + std::to_string(fold);
            write_records(fs::path(opts.out) /
                              ("records_" + opts.method + "_" + tag + "_seed" +
                               std::to_string(seed) + ".jsonl"),
                          results[i]);
        }
        return std::make_pair(std::move(results), std::move(result_domains));
    };

    // Worker pool over independent (fold, seed) jobs.
    using JobResult =
        std::pair<std::vector<StreamResult>, std::vector<std::size_t>>;
    std::vector<std::tuple<std::size_t, std::uint64_t, std::future<JobResult>>>
        jobs;
    for (std::size_t fold = 0; fold < domains.size(); ++fold)
        for (std::uint64_t seed : opts.seeds)
            jobs.emplace_back(fold, seed,
                              std::async(std::launch::async, run_fold, fold, seed));

    // Aggregate per target domain; for CTTA a domain may be visited from
    // several sources, all samples count toward its cell.
    std::vector<std::vector<double>> acc_by_seed(domains.size()),
        f1_by_seed(domains.size()), ent_by_seed(domains.size());
    for (auto& [fold, seed, fut] : jobs) {
        auto [results, result_domains] = fut.get();
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& r = results[i];
            if (!std::isfinite(r.accuracy) || !std::isfinite(r.mean_entropy))
                throw NumericError("non-finite metric in adaptation results");
            acc_by_seed[result_domains[i]].push_back(r.accuracy);
            f1_by_seed[result_domains[i]].push_back(r.macro_f1);
            ent_by_seed[result_domains[i]].push_back(r.mean_entropy);
        }
    }

    const fs::path summary_path =
        fs::path(opts.out) / ("summary_" + opts.method + "_" + opts.protocol + ".txt");
    std::ofstream summary(summary_path);
    if (!summary)
        throw std::runtime_error("cannot write " + summary_path.string());
    summary << "method " << opts.method << " protocol " << opts.protocol
            << " seeds " << opts.seeds.size() << "\n";
    std::vector<double> domain_acc, domain_f1;
    for (std::size_t d = 0; d < domains.size(); ++d) {
        if (acc_by_seed[d].empty()) continue; // CTTA: sources are not targets of themselves
        const SeedStats acc = seed_stats(acc_by_seed[d]);
        const SeedStats f1 = seed_stats(f1_by_seed[d]);
        const SeedStats ent = seed_stats(ent_by_seed[d]);
        summary << "domain " << d << " accuracy " << fmt(acc.mean) << " ("
                << fmt(acc.stddev) << ") macro_f1 " << fmt(f1.mean) << " ("
                << fmt(f1.stddev) << ") entropy " << fmt(ent.mean) << "\n";
        domain_acc.push_back(acc.mean);
        domain_f1.push_back(f1.mean);
    }
    const SeedStats avg_acc = seed_stats(domain_acc);
    const SeedStats avg_f1 = seed_stats(domain_f1);
    summary << "average accuracy " << fmt(avg_acc.mean) << " macro_f1 "
            << fmt(avg_f1.mean) << "\n";
    std::cout << "wrote " << summary_path.string() << "\n";
    return kExitOk;
}

int cmd_bench(const BenchOptions& opts) {
    auto domains = load_domains(opts.data);
    fs::create_directories(opts.out);
    const fs::path model_file = fold_model_path(opts.models, "looa", 0);
    const SavedModel saved = load_model(model_file.string());
    const DomainDataset target = standardized_copy(domains[0], saved);

    std::vector<TtaMethod> methods;
    for (const auto& name : opts.methods)
        methods.push_back(method_from_name(name));
    const BenchReport report =
        benchmark(methods, saved.model, target, opts.config, opts.repetitions);

    const fs::path file = fs::path(opts.out) / "bench.txt";
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << "repetitions " << report.repetitions << " batch_size "
        << opts.config.batch_size << "\n";
    out << "note: support_bytes is the analytic support-set footprint (a lower "
           "bound; allocator overhead excluded)\n";
    for (const auto& e : report.entries)
        out << "method " << method_name(e.method) << " mean_ms "
            << fmt(e.mean_ms) << " std_ms " << fmt(e.std_ms)
            << " support_bytes " << e.support_bytes << "\n";
    std::cout << "wrote " << file.string() << "\n";
    return kExitOk;
}

int cmd_gen_data(const DatasetOptions& opts, const std::string& out) {
    const auto domains = generate_synthetic(opts.spec);
    save_corpus(out, domains);
    std::cout << "wrote corpus with " << domains.size() << " domains to " << out
              << "\n";
    return kExitOk;
}

void add_dataset_options(CLI::App* cmd, DatasetOptions& opts) {
    cmd->add_option("--dataset", opts.dataset,
                    "Dataset selector: synthetic | uci-har");
    cmd->add_option("--data-root", opts.data_root,
                    "Dataset root (falls back to $OFTTA_DATA_ROOT); for "
                    "synthetic, a saved corpus directory");
    cmd->add_option("--classes", opts.spec.classes, "Synthetic: class count");
    cmd->add_option("--axes", opts.spec.axes, "Synthetic: sensor axes");
    cmd->add_option("--window", opts.spec.window_len, "Synthetic: window length");
    cmd->add_option("--subjects", opts.spec.subjects, "Synthetic: subject count");
    cmd->add_option("--samples-per-class", opts.spec.samples_per_class,
                    "Synthetic: samples per (subject, class)");
    cmd->add_option("--gain-sigma", opts.spec.gain_log_sigma,
                    "Synthetic: per-subject log-normal gain sigma");
    cmd->add_option("--offset-sigma", opts.spec.offset_sigma,
                    "Synthetic: per-subject offset sigma");
    cmd->add_option("--noise-sigma", opts.spec.noise_sigma,
                    "Synthetic: per-sample noise sigma");
    cmd->add_option("--gen-seed", opts.spec.seed, "Synthetic: generator seed");
}

void add_adaptation_options(CLI::App* cmd, AdaptationConfig& cfg) {
    cmd->add_option("--adapt-batch", cfg.batch_size, "Adaptation batch size");
    cmd->add_option("--capacity", cfg.support_capacity,
                    "Support-set capacity M (-1 = unbounded)");
    cmd->add_option("--alpha", cfg.alpha, "alpha-bn mixing ratio");
    cmd->add_option("--edtn-bottom", cfg.edtn_bottom, "EDTN bottom-layer alpha");
    cmd->add_option("--edtn-top", cfg.edtn_top, "EDTN top-layer alpha");
    cmd->add_option("--alpha-floor", cfg.bs1_alpha_floor,
                    "EDTN alpha floor in batch-size-1 mode");
    cmd->add_flag("--reset-at-boundary", cfg.reset_at_boundary,
                  "CTTA: reset adaptation state at domain boundaries");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimization-free test-time adaptation for sensor streams"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a key-value config file");

    TrainOptions train_opts;
    AdaptOptions adapt_opts;
    BenchOptions bench_opts;
    DatasetOptions gen_opts;
    std::string gen_out = "corpus";
    std::string seeds_csv;

    auto* train = app.add_subcommand("train", "Train source checkpoints");
    add_dataset_options(train, train_opts.data);
    train->add_option("--protocol", train_opts.protocol, "looa | ctta");
    train->add_option("--out", train_opts.out, "Output directory");
    train->add_option("--epochs", train_opts.config.epochs, "Training epochs");
    train->add_option("--lr", train_opts.config.learning_rate, "Learning rate");
    train->add_option("--train-batch", train_opts.config.batch_size,
                      "Training batch size");
    train->add_option("--val-fraction", train_opts.config.validation_fraction,
                      "Validation holdout fraction");
    train->add_option("--seed", train_opts.config.seed, "Training seed");
    train->add_option("--channels", train_opts.channels,
                      "Conv channels per block (e.g. --channels 64 128 256)");
    train->add_option("--kernel-h", train_opts.kernel_h, "Conv kernel height");
    train->add_option("--pool-h", train_opts.pool_h, "Max-pool height");

    auto* adapt = app.add_subcommand("adapt", "Run a streaming adaptation protocol");
    add_dataset_options(adapt, adapt_opts.data);
    adapt->add_option("--protocol", adapt_opts.protocol, "looa | ctta | bs1");
    adapt->add_option("--method", adapt_opts.method,
                      "erm | bn | t3a | alpha-bn | oftta");
    adapt->add_option("--models", adapt_opts.models, "Checkpoint directory");
    adapt->add_option("--out", adapt_opts.out, "Output directory");
    adapt->add_option("--seeds", seeds_csv, "Comma-separated stream seeds");
    add_adaptation_options(adapt, adapt_opts.config);

    auto* bench = app.add_subcommand("bench", "Benchmark per-batch adaptation cost");
    add_dataset_options(bench, bench_opts.data);
    bench->add_option("--models", bench_opts.models, "Checkpoint directory");
    bench->add_option("--out", bench_opts.out, "Output directory");
    bench->add_option("--methods", bench_opts.methods, "Methods to benchmark");
    bench->add_option("--reps", bench_opts.repetitions, "Repetitions (>= 3)");
    add_adaptation_options(bench, bench_opts.config);

    auto* gen = app.add_subcommand("gen-data", "Write a synthetic corpus to disk");
    add_dataset_options(gen, gen_opts);
    gen->add_option("--out", gen_out, "Corpus output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (!seeds_csv.empty()) {
            adapt_opts.seeds.clear();
            std::istringstream ss(seeds_csv);
            std::string tok;
            while (std::getline(ss, tok, ','))
                adapt_opts.seeds.push_back(std::stoull(tok));
            if (adapt_opts.seeds.empty())
                throw std::invalid_argument("--seeds: no seeds given");
        }
        if (train->parsed()) return cmd_train(train_opts);
        if (adapt->parsed()) return cmd_adapt(adapt_opts);
        if (bench->parsed()) return cmd_bench(bench_opts);
        if (gen->parsed()) return cmd_gen_data(gen_opts, gen_out);
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        if (what.find("diverged") != std::string::npos ||
            what.find("NaN") != std::string::npos ||
            what.find("non-finite") != std::string::npos) {
            std::cerr << "numeric failure: " << what << "\n";
            return kExitNumeric;
        }
        std::cerr << "data error: " << what << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}

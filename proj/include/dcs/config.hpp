#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcs/synthetic.hpp"
#include "dcs/trainer.hpp"

namespace dcs {

/// Configuration problems carry the offending field so the CLI can point at
/// it and exit with a distinct status.
class config_error : public std::runtime_error {
public:
    config_error(const std::string& field, const std::string& msg)
        : std::runtime_error(field + ": " + msg), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// One experiment: dataset, training setup, output location, seeds.
struct RunSpec {
    std::string experiment;
    std::string output_dir;
    DatasetSpec dataset;
    TrainConfig train;
    std::vector<std::uint64_t> seeds; // one run per seed
};

namespace cfg {

using nlohmann::json;

inline std::string join_path(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw config_error(join_path(path, it.key()), "unknown field");
    }
}

template <typename T>
T req(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) throw config_error(join_path(path, key), "missing required field");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error(join_path(path, key), "wrong type");
    }
}

template <typename T>
T opt(const json& obj, const std::string& path, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error(join_path(path, key), "wrong type");
    }
}

inline SelectorKind parse_selector_kind(const std::string& name, const std::string& path) {
    if (name == "full") return SelectorKind::Full;
    if (name == "random") return SelectorKind::Random;
    if (name == "pca") return SelectorKind::Pca;
    if (name == "kmeans") return SelectorKind::Kmeans;
    if (name == "optimal") return SelectorKind::Optimal;
    if (name == "hf") return SelectorKind::Hf;
    throw config_error(path, "unknown selector kind '" + name +
                                 "' (expected full|random|pca|kmeans|optimal|hf)");
}

inline ExtractorKind parse_extractor_kind(const std::string& name, const std::string& path) {
    if (name == "identity") return ExtractorKind::Identity;
    if (name == "linear") return ExtractorKind::Linear;
    if (name == "mlp") return ExtractorKind::Mlp;
    throw config_error(path, "unknown extractor '" + name + "' (expected identity|linear|mlp)");
}

inline SplitMode parse_split_mode(const std::string& name, const std::string& path) {
    if (name == "difference") return SplitMode::PairDifference;
    if (name == "midpoint") return SplitMode::PairMidpoint;
    throw config_error(path, "unknown split mode '" + name + "' (expected difference|midpoint)");
}

inline DatasetSpec parse_dataset(const json& obj, const std::string& path) {
    check_keys(obj, path,
               {"classes", "dim", "samples_per_class", "superclusters", "noise",
                "center_spread", "holdout_per_class", "seed"});
    DatasetSpec ds;
    ds.n_classes = req<std::size_t>(obj, path, "classes");
    ds.dim = req<std::size_t>(obj, path, "dim");
    ds.samples_per_class = req<std::size_t>(obj, path, "samples_per_class");
    ds.n_superclusters = opt<std::size_t>(obj, path, "superclusters", 1);
    ds.noise_scale = opt<double>(obj, path, "noise", 0.2);
    ds.center_spread = opt<double>(obj, path, "center_spread", 0.3);
    ds.holdout_per_class = opt<std::size_t>(obj, path, "holdout_per_class", 0);
    ds.seed = opt<std::uint64_t>(obj, path, "seed", 1);
    return ds;
}

inline TrainConfig parse_train(const json& obj, const std::string& path, std::size_t n_classes) {
    check_keys(obj, path,
               {"epochs", "batch_size", "learning_rate", "momentum", "extractor",
                "extractor_hidden", "selector", "forest", "adaptive", "metrics"});
    TrainConfig tc;
    tc.epochs = req<std::size_t>(obj, path, "epochs");
    tc.batch_size = req<std::size_t>(obj, path, "batch_size");
    tc.learning_rate = req<double>(obj, path, "learning_rate");
    tc.momentum = opt<double>(obj, path, "momentum", 0.9);
    tc.extractor = parse_extractor_kind(opt<std::string>(obj, path, "extractor", "identity"),
                                        join_path(path, "extractor"));
    tc.extractor_hidden = opt<std::size_t>(obj, path, "extractor_hidden", 0);

    const std::string sel_path = join_path(path, "selector");
    if (!obj.contains("selector")) throw config_error(sel_path, "missing required field");
    const json& sel = obj.at("selector");
    check_keys(sel, sel_path, {"kind", "quota", "batch_cap", "code_bits", "groups"});
    tc.selector.kind = parse_selector_kind(req<std::string>(sel, sel_path, "kind"),
                                           join_path(sel_path, "kind"));
    tc.selector.quota = opt<std::size_t>(sel, sel_path, "quota", 0);
    tc.selector.batch_cap = opt<std::size_t>(sel, sel_path, "batch_cap", 0);
    tc.selector.code_bits = opt<std::size_t>(sel, sel_path, "code_bits", 10);
    tc.selector.n_groups = opt<std::size_t>(sel, sel_path, "groups", 1024);
    if (tc.selector.quota > n_classes)
        throw config_error(join_path(sel_path, "quota"), "quota exceeds class count");
    if (tc.selector.batch_cap != 0 && tc.selector.batch_cap < tc.batch_size)
        throw config_error(join_path(sel_path, "batch_cap"),
                           "batch cap must be at least the batch size");

    if (obj.contains("forest")) {
        const std::string fpath = join_path(path, "forest");
        const json& forest = obj.at("forest");
        check_keys(forest, fpath, {"trees", "leaf_capacity", "rebuild_interval", "split_mode"});
        tc.n_trees = opt<std::size_t>(forest, fpath, "trees", 10);
        tc.forest_options.leaf_capacity =
            opt<std::uint32_t>(forest, fpath, "leaf_capacity", 64);
        tc.rebuild_interval = opt<std::size_t>(forest, fpath, "rebuild_interval", 200);
        tc.forest_options.split_mode = parse_split_mode(
            opt<std::string>(forest, fpath, "split_mode", "difference"),
            join_path(fpath, "split_mode"));
        if (tc.forest_options.leaf_capacity < 2)
            throw config_error(join_path(fpath, "leaf_capacity"), "must be >= 2");
        if (tc.n_trees < 1) throw config_error(join_path(fpath, "trees"), "must be >= 1");
    }

    if (obj.contains("adaptive")) {
        const std::string apath = join_path(path, "adaptive");
        const json& ad = obj.at("adaptive");
        check_keys(ad, apath,
                   {"enabled", "tau_start", "tau_end", "trees_start", "trees_end",
                    "interval_start", "interval_end", "epochs_per_phase", "phases",
                    "quota_floor", "quota_ceil"});
        tc.adaptive = opt<bool>(ad, apath, "enabled", true);
        tc.schedule.tau_start = opt<double>(ad, apath, "tau_start", 0.7);
        tc.schedule.tau_end = opt<double>(ad, apath, "tau_end", 0.9);
        tc.schedule.trees_start = opt<std::size_t>(ad, apath, "trees_start", 5);
        tc.schedule.trees_end = opt<std::size_t>(ad, apath, "trees_end", 50);
        tc.schedule.interval_start = opt<std::size_t>(ad, apath, "interval_start", 100);
        tc.schedule.interval_end = opt<std::size_t>(ad, apath, "interval_end", 1000);
        tc.schedule.epochs_per_phase = opt<std::size_t>(ad, apath, "epochs_per_phase", 2);
        tc.schedule.n_phases = opt<std::size_t>(ad, apath, "phases", 0);
        tc.quota_floor = opt<std::size_t>(ad, apath, "quota_floor", 0);
        tc.quota_ceil = opt<std::size_t>(ad, apath, "quota_ceil", 0);
        if (tc.schedule.epochs_per_phase < 1)
            throw config_error(join_path(apath, "epochs_per_phase"), "must be >= 1");
        if (tc.schedule.tau_start <= 0.0 || tc.schedule.tau_end > 1.0 ||
            tc.schedule.tau_start > tc.schedule.tau_end)
            throw config_error(join_path(apath, "tau_start"),
                               "need 0 < tau_start <= tau_end <= 1");
        if (tc.adaptive && tc.selector.kind != SelectorKind::Hf)
            throw config_error(join_path(apath, "enabled"),
                               "adaptive allocation requires the hf selector");
        if (tc.schedule.n_phases == 0)
            tc.schedule.n_phases =
                (tc.epochs + tc.schedule.epochs_per_phase - 1) / tc.schedule.epochs_per_phase;
    }

    if (obj.contains("metrics")) {
        const std::string mpath = join_path(path, "metrics");
        const json& met = obj.at("metrics");
        check_keys(met, mpath, {"k_fraction", "overlap_every", "monitor_batch"});
        tc.metric_k_fraction = opt<double>(met, mpath, "k_fraction", 0.05);
        tc.overlap_every = opt<std::size_t>(met, mpath, "overlap_every", 50);
        tc.monitor_batch = opt<std::size_t>(met, mpath, "monitor_batch", 32);
        if (tc.metric_k_fraction <= 0.0 || tc.metric_k_fraction > 1.0)
            throw config_error(join_path(mpath, "k_fraction"), "must be in (0,1]");
        if (tc.overlap_every < 1)
            throw config_error(join_path(mpath, "overlap_every"), "must be >= 1");
    }

    if ((tc.selector.kind == SelectorKind::Hf) && !obj.contains("forest") &&
        !obj.contains("adaptive"))
        throw config_error(join_path(path, "forest"), "hf selector needs a forest block");
    return tc;
}

} // namespace cfg

inline RunSpec parse_run_spec(const nlohmann::json& root, const std::string& source_name) {
    using cfg::check_keys;
    using cfg::opt;
    using cfg::req;
    check_keys(root, "", {"experiment", "output_dir", "seed", "seeds", "dataset", "train"});
    RunSpec spec;
    spec.experiment = req<std::string>(root, "", "experiment");
    spec.output_dir = opt<std::string>(root, "", "output_dir", "runs/" + spec.experiment);
    if (!root.contains("dataset")) throw config_error("dataset", "missing required field");
    spec.dataset = cfg::parse_dataset(root.at("dataset"), "dataset");
    if (!root.contains("train")) throw config_error("train", "missing required field");
    spec.train = cfg::parse_train(root.at("train"), "train", spec.dataset.n_classes);

    const std::uint64_t base_seed = opt<std::uint64_t>(root, "", "seed", 1);
    spec.seeds = opt<std::vector<std::uint64_t>>(root, "", "seeds", {});
    if (spec.seeds.empty()) spec.seeds.push_back(base_seed);
    spec.train.seed = spec.seeds.front();
    (void)source_name;
    return spec;
}

inline RunSpec load_run_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in.good()) throw config_error(path.string(), "cannot open config file");
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& err) {
        throw config_error(path.string(), std::string("parse error: ") + err.what());
    }
    return parse_run_spec(root, path.string());
}

} // namespace dcs

#pragma once

#include <charconv>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kmoco/correction/trainer.hpp"
#include "kmoco/io/raw.hpp"
#include "kmoco/motion/types.hpp"

namespace kmoco {

/// Experiment description, read from flat key=value text.
///
/// Keys (defaults in brackets):
///   seed [1]               root seed of every random stream
///   size [64]              phantom edge length
///   eval_slices [50]       evaluation slices per severity
///   severities [minor,moderate,heavy]
///   scenarios [l1,l1_dc,full]
///   train_pairs [500]      corrector training pairs
///   val_pairs [100]        corrector validation pairs
///   train_steps [200]      Adam steps per scenario
///   batch [8]
///   lr [0.0002]
///   train_severities [minor]
///   dc_teacher_forcing [0] feed the ground-truth mask to the DC loss
///   detector [trained]     trained | oracle
///   detector_pairs [500]
///   detector_steps [400]
///   detector_weights []    load instead of training
///   corrector_weights.<scenario> []  load instead of training
///   nifti []               evaluate slices of this volume instead of phantoms
///   nifti_axis [2]
///   nifti_slices []        comma-separated indices
///   bootstrap_iters [10000]
///   tukey_draws [200000]
///   figures [1]
///   output_dir [experiment_out]
struct ExperimentConfig {
    std::uint64_t seed = 1;
    int size = 64;
    int eval_slices = 50;
    std::vector<std::string> severities{"minor", "moderate", "heavy"};
    std::vector<LossScenario> scenarios{LossScenario::l1, LossScenario::l1_dc, LossScenario::full};
    int train_pairs = 500;
    int val_pairs = 100;
    int train_steps = 200;
    int batch = 8;
    double lr = 2e-4;
    std::vector<std::string> train_severities{"minor"};
    bool dc_teacher_forcing = false;
    bool trained_detector = true;
    int detector_pairs = 500;
    int detector_steps = 400;
    std::string detector_weights;
    std::map<std::string, std::string> corrector_weights;
    std::string nifti;
    int nifti_axis = 2;
    std::vector<int> nifti_slices;
    int bootstrap_iters = 10000;
    int tukey_draws = 200000;
    bool figures = true;
    std::string output_dir = "experiment_out";

    std::vector<SeverityPreset> severity_presets() const {
        std::vector<SeverityPreset> out;
        for (const auto& s : severities) out.push_back(SeverityPreset::from_name(s));
        return out;
    }

    std::vector<SeverityPreset> train_presets() const {
        std::vector<SeverityPreset> out;
        for (const auto& s : train_severities) out.push_back(SeverityPreset::from_name(s));
        return out;
    }

    /// Checks values and that every referenced input path exists.
    void validate() const {
        auto bad = [](const std::string& msg) { fail(ErrorCategory::config, msg); };
        if (size < 16) bad("size must be at least 16");
        if (eval_slices < 2 && nifti.empty()) bad("eval_slices must be at least 2");
        if (severities.empty()) bad("severities must not be empty");
        if (scenarios.empty()) bad("scenarios must not be empty");
        if (train_pairs < 1 || val_pairs < 1 || train_steps < 0 || batch < 1) bad("bad training sizes");
        if (!(lr > 0.0)) bad("lr must be positive");
        if (detector_pairs < 1 || detector_steps < 0) bad("bad detector training sizes");
        if (bootstrap_iters < 100) bad("bootstrap_iters must be at least 100");
        if (tukey_draws < 1000) bad("tukey_draws must be at least 1000");
        if (output_dir.empty()) bad("output_dir must not be empty");
        severity_presets();
        train_presets();
        auto must_exist = [&](const std::string& p, const std::string& key) {
            if (!p.empty() && !io::fs::exists(p)) bad(key + ": path '" + p + "' does not exist");
        };
        must_exist(detector_weights, "detector_weights");
        must_exist(nifti, "nifti");
        for (const auto& [s, p] : corrector_weights) {
            scenario_from_name(s);
            must_exist(p, "corrector_weights." + s);
        }
        if (!nifti.empty() && nifti_slices.size() < 2) bad("nifti_slices needs at least two indices");
    }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ','))
        if (auto t = io::trim(item); !t.empty()) out.push_back(t);
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    fail(ErrorCategory::config, key + ": '" + v + "' is not a boolean");
}

} // namespace detail

inline ExperimentConfig experiment_config_from(const std::map<std::string, std::string>& kv, const std::string& origin) {
    ExperimentConfig c;
    auto as_int = [&](const std::string& k, const std::string& v) {
        try {
            return static_cast<int>(io::parse_int(v, origin + " " + k));
        } catch (const Error& e) {
            fail(ErrorCategory::config, e.what());
        }
    };
    for (const auto& [k, v] : kv) {
        if (k == "seed") {
            const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), c.seed);
            if (ec != std::errc{} || end != v.data() + v.size() || v.empty())
                fail(ErrorCategory::config, origin + " seed: '" + v + "' is not an unsigned integer");
        } else if (k == "size") c.size = as_int(k, v);
        else if (k == "eval_slices") c.eval_slices = as_int(k, v);
        else if (k == "severities") c.severities = detail::split_list(v);
        else if (k == "scenarios") {
            c.scenarios.clear();
            for (const auto& s : detail::split_list(v)) c.scenarios.push_back(scenario_from_name(s));
        } else if (k == "train_pairs") c.train_pairs = as_int(k, v);
        else if (k == "val_pairs") c.val_pairs = as_int(k, v);
        else if (k == "train_steps") c.train_steps = as_int(k, v);
        else if (k == "batch") c.batch = as_int(k, v);
        else if (k == "lr") {
            try {
                c.lr = io::parse_double(v, origin + " lr");
            } catch (const Error& e) {
                fail(ErrorCategory::config, e.what());
            }
        } else if (k == "train_severities") c.train_severities = detail::split_list(v);
        else if (k == "dc_teacher_forcing") c.dc_teacher_forcing = detail::parse_bool(v, k);
        else if (k == "detector") {
            if (v == "trained") c.trained_detector = true;
            else if (v == "oracle") c.trained_detector = false;
            else fail(ErrorCategory::config, origin + " detector: expected trained or oracle, got '" + v + "'");
        } else if (k == "detector_pairs") c.detector_pairs = as_int(k, v);
        else if (k == "detector_steps") c.detector_steps = as_int(k, v);
        else if (k == "detector_weights") c.detector_weights = v;
        else if (k.rfind("corrector_weights.", 0) == 0) c.corrector_weights[k.substr(18)] = v;
        else if (k == "nifti") c.nifti = v;
        else if (k == "nifti_axis") c.nifti_axis = as_int(k, v);
        else if (k == "nifti_slices") {
            c.nifti_slices.clear();
            for (const auto& s : detail::split_list(v)) c.nifti_slices.push_back(as_int(k, s));
        } else if (k == "bootstrap_iters") c.bootstrap_iters = as_int(k, v);
        else if (k == "tukey_draws") c.tukey_draws = as_int(k, v);
        else if (k == "figures") c.figures = detail::parse_bool(v, k);
        else if (k == "output_dir") c.output_dir = v;
        else fail(ErrorCategory::config, origin + ": unknown key '" + k + "'");
    }
    return c;
}

inline ExperimentConfig load_experiment_config(const io::fs::path& path) {
    return experiment_config_from(io::read_key_values(path), path.string());
}

/// Corrector training recipe, also read from key=value text by the CLI.
///
/// Keys: seed, size, train_pairs, val_pairs, steps, batch, lr, scenario,
/// train_severities, dc_teacher_forcing, levels, base_channels,
/// window_size, heads, shifted_windows.
struct TrainRecipe {
    std::uint64_t seed = 1;
    int size = 64;
    int train_pairs = 500;
    int val_pairs = 100;
    TrainConfig train{};
    std::vector<std::string> train_severities{"minor"};
    CorrectorConfig model{};
};

inline TrainRecipe train_recipe_from(const std::map<std::string, std::string>& kv, const std::string& origin) {
    TrainRecipe r;
    auto num = [&](const std::string& k, const std::string& v) -> long long {
        try {
            return io::parse_int(v, origin + " " + k);
        } catch (const Error& e) {
            fail(ErrorCategory::config, e.what());
        }
    };
    for (const auto& [k, v] : kv) {
        if (k == "seed") {
            const long long s = num(k, v);
            if (s < 0) fail(ErrorCategory::config, origin + " seed: must be non-negative");
            r.seed = static_cast<std::uint64_t>(s);
        }
        else if (k == "size") r.size = int(num(k, v));
        else if (k == "train_pairs") r.train_pairs = int(num(k, v));
        else if (k == "val_pairs") r.val_pairs = int(num(k, v));
        else if (k == "steps") r.train.steps = int(num(k, v));
        else if (k == "batch") r.train.batch = int(num(k, v));
        else if (k == "lr") {
            try {
                r.train.adam.lr = io::parse_double(v, origin + " lr");
            } catch (const Error& e) {
                fail(ErrorCategory::config, e.what());
            }
        } else if (k == "scenario") r.train.scenario = scenario_from_name(v);
        else if (k == "train_severities") r.train_severities = detail::split_list(v);
        else if (k == "dc_teacher_forcing") r.train.dc_teacher_forcing = detail::parse_bool(v, k);
        else if (k == "levels") r.model.levels = int(num(k, v));
        else if (k == "base_channels") r.model.base_channels = int(num(k, v));
        else if (k == "window_size") r.model.window_size = int(num(k, v));
        else if (k == "heads") r.model.heads = int(num(k, v));
        else if (k == "shifted_windows") r.model.shifted_windows = detail::parse_bool(v, k);
        else fail(ErrorCategory::config, origin + ": unknown key '" + k + "'");
    }
    if (r.size < 16 || r.train_pairs < 1 || r.val_pairs < 1 || r.train.steps < 0 || r.train.batch < 1)
        fail(ErrorCategory::config, origin + ": bad training sizes");
    for (const auto& s : r.train_severities) SeverityPreset::from_name(s);
    return r;
}

} // namespace kmoco

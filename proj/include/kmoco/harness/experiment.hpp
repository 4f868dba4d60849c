#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmoco/correction/dc_project.hpp"
#include "kmoco/harness/config.hpp"
#include "kmoco/harness/dataset.hpp"
#include "kmoco/io/nifti.hpp"
#include "kmoco/io/png.hpp"
#include "kmoco/io/weights.hpp"
#include "kmoco/metrics/metrics.hpp"
#include "kmoco/metrics/stats.hpp"

namespace kmoco {

using Logger = std::function<void(const std::string&)>;

/// Run `f`, turning any failure into a stage_failure naming the stage
/// (and slice, if given).
template <class F>
auto run_stage(const std::string& stage, const std::string& where, F&& f) -> decltype(f()) {
    const std::string ctx = "stage '" + stage + "'" + (where.empty() ? "" : " (" + where + ")");
    try {
        return f();
    } catch (const Error& e) {
        fail(ErrorCategory::stage_failure, ctx + " failed: [" + std::string(category_name(e.category())) + "] " + e.what());
    } catch (const std::exception& e) {
        fail(ErrorCategory::stage_failure, ctx + " failed: " + e.what());
    }
}

struct MetricRow {
    std::string slice_id;
    std::string method;
    std::string severity;
    SliceMetrics m;
};

inline std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline void write_metrics_csv(const io::fs::path& path, const std::vector<MetricRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    out << "slice_id,method,severity,psnr_db,ssim,nmse_pct\n";
    for (const auto& r : rows)
        out << r.slice_id << ',' << r.method << ',' << r.severity << ',' << format_metric(r.m.psnr_db) << ','
            << format_metric(r.m.ssim) << ',' << format_metric(r.m.nmse_pct) << '\n';
}

inline std::vector<MetricRow> read_metrics_csv(const io::fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<MetricRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (io::trim(line).empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() != 6) fail(ErrorCategory::bad_header, path.string() + ":" + std::to_string(lineno) + ": expected 6 columns");
        auto num = [&](const std::string& s) {
            if (s == "inf") return std::numeric_limits<double>::infinity();
            return io::parse_double(s, path.string() + ":" + std::to_string(lineno));
        };
        rows.push_back({f[0], f[1], f[2], {num(f[3]), num(f[4]), num(f[5])}});
    }
    return rows;
}

namespace detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline double metric_of(const SliceMetrics& m, int which) {
    return which == 0 ? m.psnr_db : which == 1 ? m.ssim : m.nmse_pct;
}

inline constexpr const char* metric_names[3] = {"psnr_db", "ssim", "nmse_pct"};

} // namespace detail

/// Means with percentile-bootstrap intervals per (method, severity), and a
/// one-way ANOVA + Tukey HSD across methods per severity and metric.
/// Method and severity order follow first appearance in `rows`.
inline nlohmann::json summarize(const std::vector<MetricRow>& rows, std::uint64_t seed, int bootstrap_iters,
                                int tukey_draws) {
    std::vector<std::string> methods, severities;
    auto note = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    for (const auto& r : rows) {
        note(methods, r.method);
        note(severities, r.severity);
    }
    auto values = [&](const std::string& method, const std::string& sev, int which) {
        std::vector<double> out;
        for (const auto& r : rows)
            if (r.method == method && r.severity == sev) out.push_back(detail::metric_of(r.m, which));
        return out;
    };
    auto all_finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };

    nlohmann::json groups = nlohmann::json::array();
    for (std::size_t si = 0; si < severities.size(); ++si)
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            nlohmann::json g{{"method", methods[mi]}, {"severity", severities[si]}};
            for (int w = 0; w < 3; ++w) {
                const auto v = values(methods[mi], severities[si], w);
                g["n"] = v.size();
                if (v.empty()) continue;
                if (!all_finite(v)) {
                    g[detail::metric_names[w]] = {{"mean", nullptr}, {"ci_low", nullptr}, {"ci_high", nullptr}};
                    continue;
                }
                Rng rng(derive_seed(seed, hash_label("bootstrap/" + methods[mi] + "/" + severities[si] + "/" +
                                                     detail::metric_names[w])));
                const auto ci = bootstrap_ci(v, rng, bootstrap_iters);
                g[detail::metric_names[w]] = {{"mean", ci.mean}, {"ci_low", ci.low}, {"ci_high", ci.high}};
            }
            groups.push_back(g);
        }

    nlohmann::json tests = nlohmann::json::array();
    if (methods.size() >= 2)
        for (const auto& sev : severities)
            for (int w = 0; w < 3; ++w) {
                std::vector<std::vector<double>> gs;
                bool usable = true;
                for (const auto& m : methods) {
                    gs.push_back(values(m, sev, w));
                    usable = usable && gs.back().size() >= 2 && all_finite(gs.back());
                }
                nlohmann::json t{{"severity", sev}, {"metric", detail::metric_names[w]}};
                if (!usable) {
                    t["skipped"] = "groups too small or non-finite";
                    tests.push_back(t);
                    continue;
                }
                Rng rng(derive_seed(seed, hash_label("tukey/" + sev + "/" + detail::metric_names[w])));
                const auto r = tukey_hsd(gs, rng, 0.05, tukey_draws);
                t["anova_f"] = detail::finite_or_null(r.anova_f);
                t["anova_p"] = r.anova_p;
                t["q_critical"] = r.q_critical;
                t["alpha"] = r.alpha;
                nlohmann::json pw = nlohmann::json::array();
                for (const auto& c : r.pairwise)
                    pw.push_back({{"a", methods[c.a]},
                                  {"b", methods[c.b]},
                                  {"mean_diff", c.mean_diff},
                                  {"q", detail::finite_or_null(c.q)},
                                  {"p_adjusted", c.p_adjusted},
                                  {"significant", c.significant}});
                t["pairwise"] = pw;
                tests.push_back(t);
            }

    return {{"root_seed", seed},
            {"ci_method", "percentile bootstrap"},
            {"bootstrap_iters", bootstrap_iters},
            {"tukey_draws", tukey_draws},
            {"methods", methods},
            {"severities", severities},
            {"groups", groups},
            {"tests", tests}};
}

struct ExperimentResult {
    std::vector<MetricRow> rows;
    nlohmann::json summary;
    io::fs::path metrics_csv;
    io::fs::path summary_json;
};

namespace detail {

struct EvalSlice {
    std::string id;
    RealImage gt;
    SeveritySample sample;
};

inline RealImage normalise_unit(RealImage img) {
    const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
    const double l = *lo, range = *hi - *lo;
    for (auto& v : img.data()) v = range > 0.0 ? (v - l) / range : 0.0;
    return img;
}

inline std::string hdc_name(LossScenario s) { return std::string(scenario_name(s)) + "+hdc"; }

} // namespace detail

/// Synthesise (or load) data, train or load the detector and one corrector
/// per loss scenario, evaluate every method at every severity, and write
/// metrics.csv, summary.json, training logs and figures to output_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Logger& log = {}) {
    auto say = [&](const std::string& s) {
        if (log) log(s);
    };
    run_stage("config", "", [&] { cfg.validate(); });
    const io::fs::path out = cfg.output_dir;
    run_stage("output", "", [&] {
        io::fs::create_directories(out / "models");
        if (cfg.figures) io::fs::create_directories(out / "figures");
    });
    const std::uint64_t seed = cfg.seed;
    const auto sev_presets = cfg.severity_presets();

    // Detector.
    std::optional<Detector<float>> detector;
    nlohmann::json det_json{{"mode", cfg.trained_detector || !cfg.detector_weights.empty() ? "trained" : "oracle"}};
    if (!cfg.detector_weights.empty()) {
        detector = run_stage("load-detector", cfg.detector_weights, [&] { return io::load_detector(cfg.detector_weights); });
        det_json["weights"] = cfg.detector_weights;
    } else if (cfg.trained_detector) {
        say("training detector");
        detector = run_stage("train-detector", "", [&] {
            const auto slices =
                synthesize_slices(derive_seed(seed, hash_label("detector-data")), std::size_t(cfg.detector_pairs), cfg.size,
                                  named_presets());
            Detector<float> d(DetectorConfig{}, derive_seed(seed, hash_label("detector-init")));
            DetectorTrainConfig tc;
            tc.steps = cfg.detector_steps;
            tc.batch = cfg.batch;
            const auto dl = train_detector(d, to_detection_samples(slices), tc, derive_seed(seed, hash_label("detector-train")));
            det_json["final_loss"] = dl.step_loss.empty() ? 0.0 : dl.step_loss.back();
            io::save_detector(out / "models" / "detector.kmc", d);
            return d;
        });
    }

    // Correctors, one per scenario.
    std::map<LossScenario, Corrector<float>> correctors;
    nlohmann::json train_json = nlohmann::json::object();
    std::vector<SyntheticSlice> train_slices, val_slices;
    std::vector<TrainingPair> train_pairs, val_pairs;
    auto ensure_data = [&] {
        if (!train_pairs.empty()) return;
        const auto presets = cfg.train_presets();
        train_slices = synthesize_slices(derive_seed(seed, hash_label("train-data")), std::size_t(cfg.train_pairs), cfg.size, presets);
        val_slices = synthesize_slices(derive_seed(seed, hash_label("val-data")), std::size_t(cfg.val_pairs), cfg.size, presets);
        train_pairs = to_pairs(train_slices);
        val_pairs = to_pairs(val_slices);
        if (detector) {
            attach_predicted_masks(train_pairs, train_slices, *detector);
            attach_predicted_masks(val_pairs, val_slices, *detector);
        }
    };
    for (const LossScenario s : cfg.scenarios) {
        const std::string name(scenario_name(s));
        if (auto it = cfg.corrector_weights.find(name); it != cfg.corrector_weights.end()) {
            correctors.emplace(s, run_stage("load-corrector", it->second, [&] { return io::load_corrector(it->second); }));
            train_json[name] = {{"weights", it->second}};
            continue;
        }
        say("training corrector (" + name + ")");
        run_stage("train-corrector", name, [&] {
            ensure_data();
            Corrector<float> c(CorrectorConfig{}, derive_seed(seed, hash_label("corrector-init")));
            TrainConfig tc;
            tc.steps = cfg.train_steps;
            tc.batch = cfg.batch;
            tc.adam.lr = cfg.lr;
            tc.scenario = s;
            tc.dc_teacher_forcing = cfg.dc_teacher_forcing;
            const auto tl = train_corrector(c, train_pairs, val_pairs, tc, derive_seed(seed, hash_label("corrector-train")));
            std::ofstream curve(out / ("train_log_" + name + ".csv"), std::ios::trunc);
            curve << "step,loss\n";
            for (std::size_t i = 0; i < tl.step_loss.size(); ++i) curve << i + 1 << ',' << format_metric(tl.step_loss[i]) << '\n';
            nlohmann::json epochs = nlohmann::json::array();
            for (const auto& e : tl.epochs)
                epochs.push_back({{"epoch", e.epoch}, {"step", e.last_step}, {"train_loss", e.train_loss},
                                  {"val_loss", e.val_loss}, {"val_l1", e.val_l1}});
            train_json[name] = {{"initial_val_l1", tl.initial_val_l1}, {"final_val_l1", tl.final_val_l1}, {"epochs", epochs}};
            io::save_corrector(out / "models" / ("corrector_" + name + ".kmc"), c);
            correctors.emplace(s, std::move(c));
        });
    }

    // Evaluation set: the same ground truth at every severity.
    std::optional<io::Volume> volume;
    if (!cfg.nifti.empty()) volume = run_stage("load-nifti", cfg.nifti, [&] { return io::load_nifti(cfg.nifti); });
    const std::size_t n_eval = volume ? cfg.nifti_slices.size() : std::size_t(cfg.eval_slices);
    const std::uint64_t eval_seed = derive_seed(seed, hash_label("eval-data"));

    std::vector<MetricRow> rows;
    LineScores det_scores;
    for (const auto& preset : sev_presets) {
        say("evaluating " + preset.name);
        for (std::size_t i = 0; i < n_eval; ++i) {
            const std::string where = "slice " + std::to_string(i) + ", " + preset.name;
            detail::EvalSlice ev = run_stage("synthesize", where, [&] {
                detail::EvalSlice e;
                if (volume) {
                    e.id = "nifti" + std::to_string(cfg.nifti_slices[i]);
                    e.gt = detail::normalise_unit(io::volume_slice(*volume, cfg.nifti_axis, cfg.nifti_slices[i]));
                    e.sample = simulate_severity(fft2c(e.gt), preset,
                                                 derive_seed(derive_seed(eval_seed, 2 * i + 1), hash_label(preset.name)));
                } else {
                    auto s = synthesize_slice(eval_seed, i, cfg.size, preset);
                    e.id = "phantom" + std::to_string(i);
                    e.gt = std::move(s.gt);
                    e.sample = std::move(s.sample);
                }
                return e;
            });
            const LineMask mask = run_stage("detect", where, [&] {
                if (!detector) return oracle_detector(ev.sample.mask);
                return detector->detect(ev.sample.k_motion).binary;
            });
            det_scores += score_lines(mask, ev.sample.mask);

            std::vector<std::pair<std::string, RealImage>> outputs{{"corrupted", ev.sample.corrupted}};
            for (const LossScenario s : cfg.scenarios) {
                const auto& c = correctors.at(s);
                RealImage net = run_stage("correct", where + ", " + std::string(scenario_name(s)), [&] { return c.forward(ev.sample.corrupted); });
                RealImage hdc = run_stage("hard-dc", where, [&] { return magnitude(hard_dc_project(net, ev.sample.k_motion, mask)); });
                outputs.emplace_back(std::string(scenario_name(s)), std::move(net));
                outputs.emplace_back(detail::hdc_name(s), std::move(hdc));
            }
            run_stage("evaluate", where, [&] {
                for (const auto& [method, img] : outputs) rows.push_back({ev.id, method, preset.name, evaluate_slice(img, ev.gt)});
            });
            if (cfg.figures && i == 0)
                run_stage("figures", where, [&] {
                    const auto dir = out / "figures";
                    io::export_png(ev.gt, dir / (preset.name + "_gt.png"), 1.0, 0.5);
                    double scale = 0.0;
                    for (std::size_t p = 0; p < ev.gt.size(); ++p)
                        scale = std::max(scale, std::abs(ev.sample.corrupted.data()[p] - ev.gt.data()[p]));
                    for (const auto& [method, img] : outputs) {
                        io::export_png(img, dir / (preset.name + "_" + method + ".png"), 1.0, 0.5);
                        io::export_difference_png(img, ev.gt, dir / (preset.name + "_" + method + "_diff.png"), scale);
                    }
                });
        }
    }

    ExperimentResult res;
    res.rows = rows;
    res.metrics_csv = out / "metrics.csv";
    res.summary_json = out / "summary.json";
    run_stage("write-metrics", "", [&] { write_metrics_csv(res.metrics_csv, rows); });

    say("summarizing");
    res.summary = run_stage("statistics", "", [&] { return summarize(rows, seed, cfg.bootstrap_iters, cfg.tukey_draws); });
    det_json["line_f1"] = det_scores.f1();
    det_json["line_precision"] = det_scores.precision();
    det_json["line_recall"] = det_scores.recall();
    res.summary["detector"] = det_json;
    res.summary["training"] = train_json;

    // Loss-configuration comparison on the network outputs.
    nlohmann::json ablation = nlohmann::json::array();
    for (const auto& g : res.summary["groups"])
        for (const LossScenario s : cfg.scenarios)
            if (g["method"] == scenario_name(s))
                ablation.push_back({{"scenario", g["method"]},
                                    {"severity", g["severity"]},
                                    {"psnr_db", g["psnr_db"]["mean"]},
                                    {"ssim", g["ssim"]["mean"]},
                                    {"nmse_pct", g["nmse_pct"]["mean"]}});
    res.summary["ablation"] = ablation;
    run_stage("write-summary", "", [&] {
        std::ofstream js(res.summary_json, std::ios::trunc);
        if (!js) fail(ErrorCategory::io, "cannot write " + res.summary_json.string());
        js << res.summary.dump(2) << '\n';
        std::ofstream tab(out / "ablation.csv", std::ios::trunc);
        tab << "scenario,severity,psnr_db,ssim,nmse_pct\n";
        for (const auto& a : ablation) {
            auto f = [](const nlohmann::json& v) { return v.is_null() ? std::string("nan") : format_metric(v.get<double>()); };
            tab << a["scenario"].get<std::string>() << ',' << a["severity"].get<std::string>() << ',' << f(a["psnr_db"]) << ','
                << f(a["ssim"]) << ',' << f(a["nmse_pct"]) << '\n';
        }
    });
    return res;
}

} // namespace kmoco

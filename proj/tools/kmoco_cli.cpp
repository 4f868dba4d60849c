// Command-line front end: phantom generation, motion simulation, detection,
// training, correction, evaluation, experiments and PNG export.

#include <CLI11.hpp>

#include <iostream>

#include "kmoco/kmoco.hpp"

namespace fs = std::filesystem;
using namespace kmoco;

namespace {

void log_line(const std::string& s) { std::cerr << "[kmoco] " << s << '\n'; }

LineMask mask_for(const LineMask& m, const ImageMeta& meta) {
    require(m.ny() == meta.ny, ErrorCategory::shape_mismatch,
            "mask has " + std::to_string(m.ny()) + " lines, data has " + std::to_string(meta.ny));
    return LineMask(meta, m.line_values);
}

int cmd_phantom(int size, std::uint64_t seed, bool perturbed, const std::string& out, const std::string& png) {
    Rng rng(seed);
    const RealImage img = perturbed ? perturbed_phantom(rng, size) : phantom(size);
    io::save_raw(out, img);
    if (!png.empty()) io::export_png(img, png, 1.0, 0.5);
    return 0;
}

struct SimulateArgs {
    std::string input, severity = "minor", out_kspace, out_image, out_mask, out_gt_kspace;
    std::uint64_t seed = 0;
    int slabs_per_event = 1;
    double center_band = 0.08;
    std::optional<int> n_slabs, width_min, width_max;
    std::optional<double> rot_max, trans_max;
};

int cmd_simulate(const SimulateArgs& a) {
    const RealImage img = io::load_raw_image(a.input);
    MotionConfig mc;
    mc.center_band_frac = a.center_band;
    mc.slabs_per_event = a.slabs_per_event;
    SeverityPreset preset = SeverityPreset::from_name(a.severity);
    if (a.n_slabs) preset.n_slabs = *a.n_slabs;
    if (a.width_min) preset.width_min = *a.width_min;
    if (a.width_max) preset.width_max = *a.width_max;
    if (a.rot_max) preset.rot_max_deg = *a.rot_max;
    if (a.trans_max) preset.trans_max_mm = *a.trans_max;
    preset.validate();
    const KSpace k = fft2c(img);
    const auto s = simulate_severity(k, preset, a.seed, mc);
    io::save_raw(a.out_kspace, s.k_motion);
    if (!a.out_image.empty()) io::save_raw(a.out_image, s.corrupted);
    if (!a.out_mask.empty()) io::save_mask(a.out_mask, s.mask);
    if (!a.out_gt_kspace.empty()) io::save_raw(a.out_gt_kspace, k);
    std::cout << "corrupted lines: " << s.mask.count() << " of " << s.mask.ny() << '\n';
    return 0;
}

int cmd_detect(const std::string& input, const std::string& weights, const std::string& oracle, double threshold,
               const std::string& out_mask, const std::string& out_scores) {
    const KSpace k = io::load_raw_kspace(input);
    LineMask binary;
    if (!oracle.empty()) {
        binary = oracle_detector(mask_for(io::load_mask(oracle), k.meta()));
    } else {
        require(!weights.empty(), ErrorCategory::invalid_argument, "detect needs --weights or --oracle-mask");
        auto det = io::load_detector(weights);
        det.config().threshold = threshold;
        det.config().validate();
        const auto r = det.detect(k);
        binary = r.binary;
        if (!out_scores.empty()) {
            RealImage scores(k.meta());
            std::copy(r.scores.data().begin(), r.scores.data().end(), scores.data().begin());
            io::save_raw(out_scores, scores);
        }
    }
    io::save_mask(out_mask, binary);
    std::cout << "flagged lines: " << binary.count() << " of " << binary.ny() << '\n';
    return 0;
}

int cmd_train(const std::string& config, std::optional<std::uint64_t> seed, const std::string& kind, const std::string& out) {
    TrainRecipe r = train_recipe_from(io::read_key_values(config), config);
    if (seed) r.seed = *seed;
    if (kind == "detector") {
        const auto slices = synthesize_slices(derive_seed(r.seed, hash_label("detector-data")), std::size_t(r.train_pairs),
                                              r.size, named_presets());
        Detector<float> d(DetectorConfig{}, derive_seed(r.seed, hash_label("detector-init")));
        DetectorTrainConfig tc;
        tc.steps = r.train.steps;
        tc.batch = r.train.batch;
        tc.adam.lr = r.train.adam.lr;
        const auto log = train_detector(d, to_detection_samples(slices), tc, derive_seed(r.seed, hash_label("detector-train")));
        io::save_detector(out, d);
        std::cout << "final loss: " << (log.step_loss.empty() ? 0.0 : log.step_loss.back()) << '\n';
        return 0;
    }
    require(kind == "corrector", ErrorCategory::invalid_argument, "--kind must be corrector or detector");
    std::vector<SeverityPreset> presets;
    for (const auto& s : r.train_severities) presets.push_back(SeverityPreset::from_name(s));
    const auto train = to_pairs(synthesize_slices(derive_seed(r.seed, hash_label("train-data")), std::size_t(r.train_pairs), r.size, presets));
    const auto val = to_pairs(synthesize_slices(derive_seed(r.seed, hash_label("val-data")), std::size_t(r.val_pairs), r.size, presets));
    Corrector<float> c(r.model, derive_seed(r.seed, hash_label("corrector-init")));
    const auto log = train_corrector(c, train, val, r.train, derive_seed(r.seed, hash_label("corrector-train")));
    for (const auto& e : log.epochs)
        std::cout << "epoch " << e.epoch << " step " << e.last_step << " train_loss " << e.train_loss << " val_loss "
                  << e.val_loss << " val_l1 " << e.val_l1 << '\n';
    io::save_corrector(out, c);
    return 0;
}

int cmd_correct(const std::string& input, const std::string& kspace, const std::string& mask, const std::string& weights,
                const std::string& hard_dc, const std::string& out) {
    const RealImage img = io::load_raw_image(input);
    const auto model = io::load_corrector(weights);
    RealImage pred = model.forward(img);
    if (hard_dc == "on") {
        require(!kspace.empty() && !mask.empty(), ErrorCategory::invalid_argument, "--hard-dc on needs --kspace and --mask");
        const KSpace k = io::load_raw_kspace(kspace);
        pred = magnitude(hard_dc_project(pred, k, mask_for(io::load_mask(mask), k.meta())));
    }
    io::save_raw(out, pred);
    return 0;
}

int cmd_evaluate(const std::string& pred_dir, const std::string& gt_dir, const std::string& method,
                 const std::string& severity, const std::string& out, const std::string& summary, std::uint64_t seed) {
    require(fs::is_directory(pred_dir), ErrorCategory::io, pred_dir + " is not a directory");
    require(fs::is_directory(gt_dir), ErrorCategory::io, gt_dir + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(pred_dir))
        if (e.is_regular_file() && e.path().extension() == ".raw") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    require(!files.empty(), ErrorCategory::io, pred_dir + " holds no .raw images");
    std::vector<MetricRow> rows;
    for (const auto& f : files) {
        const auto rel = fs::relative(f, pred_dir);
        std::vector<std::string> parts(rel.begin(), rel.end());
        std::string m = method, s = severity;
        if (parts.size() == 3) {
            m = parts[0];
            s = parts[1];
        } else {
            require(parts.size() == 1, ErrorCategory::invalid_argument,
                    rel.string() + ": expected <slice>.raw or <method>/<severity>/<slice>.raw");
        }
        const std::string id = f.stem().string();
        const RealImage gt = io::load_raw_image(fs::path(gt_dir) / (id + ".raw"));
        rows.push_back({id, m, s, evaluate_slice(io::load_raw_image(f), gt)});
    }
    write_metrics_csv(out, rows);
    if (!summary.empty()) {
        std::ofstream js(summary, std::ios::trunc);
        if (!js) fail(ErrorCategory::io, "cannot write " + summary);
        js << summarize(rows, seed, default_bootstrap_iters, StudentizedRange::default_draws).dump(2) << '\n';
    }
    std::cout << "evaluated " << rows.size() << " images\n";
    return 0;
}

int cmd_experiment(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
    ExperimentConfig cfg = load_experiment_config(config);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.output_dir = out;
    const auto res = run_experiment(cfg, log_line);
    std::cout << "wrote " << res.metrics_csv.string() << " and " << res.summary_json.string() << '\n';
    return 0;
}

int cmd_export_png(const std::string& input, const std::string& diff, const std::string& out,
                   std::optional<double> window, std::optional<double> level, double scale) {
    const RealImage img = io::load_raw_image(input);
    if (!diff.empty()) {
        io::export_difference_png(img, io::load_raw_image(diff), out, scale);
        return 0;
    }
    if (window || level) {
        require(window && level, ErrorCategory::invalid_argument, "--window and --level go together");
        io::export_png(img, out, *window, *level);
    } else {
        io::export_png(img, out);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"k-space motion artifact simulation, detection and correction"};
    app.require_subcommand(1);
    int status = 0;

    auto* ph = app.add_subcommand("phantom", "Write a Shepp-Logan phantom as a raw float32 image");
    int ph_size = 64;
    std::uint64_t ph_seed = 0;
    bool ph_perturbed = false;
    std::string ph_out, ph_png;
    ph->add_option("--size", ph_size, "Edge length in pixels")->capture_default_str();
    ph->add_option("--seed", ph_seed, "Seed for --perturbed")->capture_default_str();
    ph->add_flag("--perturbed", ph_perturbed, "Jitter ellipse geometry and intensities");
    ph->add_option("--out", ph_out, "Output .raw path")->required();
    ph->add_option("--png", ph_png, "Also write a PNG preview");
    ph->callback([&] { status = cmd_phantom(ph_size, ph_seed, ph_perturbed, ph_out, ph_png); });

    auto* sim = app.add_subcommand("simulate", "Corrupt an image's k-space with rigid motion");
    SimulateArgs sa;
    sim->add_option("--input", sa.input, "Input float32 image")->required();
    sim->add_option("--severity", sa.severity, "minor | moderate | heavy")->capture_default_str();
    sim->add_option("--seed", sa.seed, "Motion seed")->capture_default_str();
    sim->add_option("--slabs-per-event", sa.slabs_per_event, "Slabs sharing one transform")->capture_default_str();
    sim->add_option("--center-band", sa.center_band, "Protected fraction of lines around DC")->capture_default_str();
    sim->add_option("--n-slabs", sa.n_slabs, "Override the preset slab count");
    sim->add_option("--width-min", sa.width_min, "Override the minimum slab width");
    sim->add_option("--width-max", sa.width_max, "Override the maximum slab width");
    sim->add_option("--rot-max", sa.rot_max, "Override the rotation bound (degrees)");
    sim->add_option("--trans-max", sa.trans_max, "Override the translation bound (mm)");
    sim->add_option("--out-kspace", sa.out_kspace, "Corrupted k-space (complex64)")->required();
    sim->add_option("--out-image", sa.out_image, "Magnitude of the corrupted image");
    sim->add_option("--out-mask", sa.out_mask, "Ground-truth line mask");
    sim->add_option("--out-gt-kspace", sa.out_gt_kspace, "Motion-free k-space");
    sim->callback([&] { status = cmd_simulate(sa); });

    auto* det = app.add_subcommand("detect", "Predict corrupted phase-encoding lines");
    std::string d_in, d_w, d_oracle, d_mask, d_scores;
    double d_thr = 0.5;
    det->add_option("--input", d_in, "Corrupted k-space (complex64)")->required();
    det->add_option("--weights", d_w, "Detector weights");
    det->add_option("--oracle-mask", d_oracle, "Pass this ground-truth mask through instead of a model");
    det->add_option("--threshold", d_thr, "Binarisation threshold")->capture_default_str();
    det->add_option("--out-mask", d_mask, "Output mask file")->required();
    det->add_option("--out-scores", d_scores, "Per-pixel scores as float32 image");
    det->callback([&] { status = cmd_detect(d_in, d_w, d_oracle, d_thr, d_mask, d_scores); });

    auto* tr = app.add_subcommand("train", "Train a corrector or detector on synthetic phantoms");
    std::string t_cfg, t_kind = "corrector", t_out;
    std::optional<std::uint64_t> t_seed;
    tr->add_option("--config", t_cfg, "key=value training recipe")->required()->check(CLI::ExistingFile);
    tr->add_option("--seed", t_seed, "Overrides the recipe seed");
    tr->add_option("--kind", t_kind, "corrector | detector")->capture_default_str();
    tr->add_option("--out", t_out, "Output weights file")->required();
    tr->callback([&] { status = cmd_train(t_cfg, t_seed, t_kind, t_out); });

    auto* cor = app.add_subcommand("correct", "Run the corrector on an image");
    std::string c_in, c_k, c_mask, c_w, c_dc = "off", c_out;
    cor->add_option("--input", c_in, "Corrupted float32 image")->required();
    cor->add_option("--kspace", c_k, "Measured k-space for hard DC");
    cor->add_option("--mask", c_mask, "Line mask for hard DC");
    cor->add_option("--weights", c_w, "Corrector weights")->required();
    cor->add_option("--hard-dc", c_dc, "on | off")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
    cor->add_option("--out", c_out, "Output float32 image")->required();
    cor->callback([&] { status = cmd_correct(c_in, c_k, c_mask, c_w, c_dc, c_out); });

    auto* ev = app.add_subcommand("evaluate", "PSNR / SSIM / NMSE of predictions against ground truth");
    std::string e_pred, e_gt, e_method = "pred", e_sev = "unknown", e_out, e_summary;
    std::uint64_t e_seed = 0;
    ev->add_option("--pred-dir", e_pred, "<slice>.raw or <method>/<severity>/<slice>.raw files")->required();
    ev->add_option("--gt-dir", e_gt, "<slice>.raw ground-truth files")->required();
    ev->add_option("--method", e_method, "Method label for flat layouts")->capture_default_str();
    ev->add_option("--severity", e_sev, "Severity label for flat layouts")->capture_default_str();
    ev->add_option("--out", e_out, "metrics.csv path")->required();
    ev->add_option("--summary", e_summary, "Also write summary JSON");
    ev->add_option("--seed", e_seed, "Seed of the bootstrap and Tukey streams")->capture_default_str();
    ev->callback([&] { status = cmd_evaluate(e_pred, e_gt, e_method, e_sev, e_out, e_summary, e_seed); });

    auto* ex = app.add_subcommand("experiment", "Full synthetic experiment: metrics.csv, summary.json, figures");
    std::string x_cfg, x_out;
    std::optional<std::uint64_t> x_seed;
    ex->add_option("--config", x_cfg, "key=value experiment config")->required()->check(CLI::ExistingFile);
    ex->add_option("--seed", x_seed, "Overrides the config seed");
    ex->add_option("--out", x_out, "Overrides output_dir");
    ex->callback([&] { status = cmd_experiment(x_cfg, x_seed, x_out); });

    auto* png = app.add_subcommand("export-png", "Write an 8-bit grayscale PNG");
    std::string p_in, p_diff, p_out;
    std::optional<double> p_window, p_level;
    double p_scale = 0.0;
    png->add_option("--input", p_in, "float32 image")->required();
    png->add_option("--diff-against", p_diff, "Write the signed difference input - this image");
    png->add_option("--window", p_window, "Window width");
    png->add_option("--level", p_level, "Window centre");
    png->add_option("--scale", p_scale, "Difference map half range (0: max |d|)")->capture_default_str();
    png->add_option("--out", p_out, "Output PNG")->required();
    png->callback([&] { status = cmd_export_png(p_in, p_diff, p_out, p_window, p_level, p_scale); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << '\n';
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << '\n';
        return 2;
    }
    return status;
}

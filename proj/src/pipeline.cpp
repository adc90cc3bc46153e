#include "crossreg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "crossreg/io.hpp"

namespace fs = std::filesystem;

namespace crossreg {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<double> parse_reals(const std::string& value, std::size_t expected,
                                const std::string& key) {
    std::vector<double> out;
    std::string v = value;
    std::replace(v.begin(), v.end(), ',', ' ');
    std::istringstream is(v);
    double x;
    while (is >> x) out.push_back(x);
    if (expected != 0 && out.size() != expected) {
        throw ConfigError(key + ": expected " + std::to_string(expected) + " numbers, got " +
                          std::to_string(out.size()));
    }
    return out;
}

double parse_real(const std::string& value, const std::string& key) {
    return parse_reals(value, 1, key)[0];
}

long parse_int(const std::string& value, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + value + "'");
    }
}

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + value + "'");
}

std::array<double, 3> parse_triple(const std::string& value, const std::string& key) {
    const auto v = parse_reals(value, 3, key);
    return {v[0], v[1], v[2]};
}

}  // namespace

PipelineConfig parse_config_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        }

        if (key == "input.fixed") cfg.input_fixed = value;
        else if (key == "input.moving") cfg.input_moving = value;
        else if (key == "input.moving_label") cfg.input_moving_label = value;
        else if (key == "phantom.preset") {
            if (value == "invisibility") {
                const bool keep = cfg.has_phantom;
                (void)keep;
                cfg.phantom = PhantomSpec::invisibility_default();
            } else {
                throw ConfigError("phantom.preset: unknown preset '" + value + "'");
            }
            cfg.has_phantom = true;
        } else if (key == "phantom.dims") {
            const auto v = parse_triple(value, key);
            cfg.phantom.dims = {static_cast<int>(v[0]), static_cast<int>(v[1]),
                                static_cast<int>(v[2])};
            cfg.has_phantom = true;
        } else if (key == "phantom.organ_center") {
            cfg.phantom.organ.center = parse_triple(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.organ_semi_axes") {
            cfg.phantom.organ.semi_axes = parse_triple(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.organ_intensity_a") {
            cfg.phantom.organ_intensity_a = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.organ_intensity_b") {
            cfg.phantom.organ_intensity_b = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.lesion_center") {
            cfg.phantom.lesion.center = parse_triple(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.lesion_radius") {
            cfg.phantom.lesion.radius = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.lesion_contrast_a") {
            cfg.phantom.lesion_contrast_a = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.lesion_contrast_b") {
            cfg.phantom.lesion_contrast_b = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.background_a") {
            cfg.phantom.background_a = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.background_b") {
            cfg.phantom.background_b = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.texture_amplitude_a") {
            cfg.phantom.texture_amplitude_a = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.texture_amplitude_b") {
            cfg.phantom.texture_amplitude_b = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.vessel") {
            const auto v = parse_reals(value, 4, key);
            cfg.phantom.vessels.push_back({{v[0], v[1], v[2]}, v[3]});
            cfg.has_phantom = true;
        } else if (key == "phantom.vessel_intensity_a") {
            cfg.phantom.vessel_intensity_a = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.vessel_intensity_b") {
            cfg.phantom.vessel_intensity_b = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.noise_sigma") {
            cfg.phantom.noise_sigma = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.deform_amplitude") {
            cfg.phantom.deform_amplitude = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.deform_smoothness") {
            cfg.phantom.deform_smoothness = parse_real(value, key);
            cfg.has_phantom = true;
        } else if (key == "phantom.seed") {
            cfg.phantom.seed = parse_int(value, key);
            cfg.has_phantom = true;
        } else if (key == "preprocess.window") {
            const auto v = parse_reals(value, 2, key);
            cfg.window_enabled = true;
            cfg.window_level_value = v[0];
            cfg.window_width = v[1];
        } else if (key == "preprocess.ct") {
            if (value != "fixed" && value != "moving" && value != "none") {
                throw ConfigError("preprocess.ct: expected fixed|moving|none");
            }
            cfg.window_target = value;
        } else if (key == "preprocess.target_spacing") {
            cfg.target_spacing = parse_triple(value, key);
            cfg.resample_enabled = true;
        } else if (key == "preprocess.normalize") {
            cfg.normalize = parse_bool(value, key);
        } else if (key == "energy.w_sim") cfg.solver.energy.w_sim = parse_real(value, key);
        else if (key == "energy.w_sim_down") cfg.solver.energy.w_sim_down = parse_real(value, key);
        else if (key == "energy.w_smooth") cfg.solver.energy.w_smooth = parse_real(value, key);
        else if (key == "energy.w_smooth_down") {
            cfg.solver.energy.w_smooth_down = parse_real(value, key);
        } else if (key == "energy.lcc_radius") {
            cfg.solver.energy.lcc_radius = static_cast<int>(parse_int(value, key));
        } else if (key == "energy.down_factor") {
            cfg.solver.energy.down_factor = static_cast<int>(parse_int(value, key));
        } else if (key == "solver.n_levels") {
            cfg.solver.n_levels = static_cast<int>(parse_int(value, key));
        } else if (key == "solver.iters_per_level") {
            cfg.solver.iters_per_level = static_cast<int>(parse_int(value, key));
        } else if (key == "solver.step_size") cfg.solver.step_size = parse_real(value, key);
        else if (key == "solver.step_shrink") cfg.solver.step_shrink = parse_real(value, key);
        else if (key == "solver.converge_tol") cfg.solver.converge_tol = parse_real(value, key);
        else if (key == "solver.cycle_weight") cfg.solver.cycle_weight = parse_real(value, key);
        else if (key == "solver.fluid_sigma") cfg.solver.fluid_sigma = parse_real(value, key);
        else if (key == "solver.seed") cfg.solver.seed = parse_int(value, key);
        else if (key == "tversky.alpha") cfg.tversky.alpha = parse_real(value, key);
        else if (key == "tversky.beta") cfg.tversky.beta = parse_real(value, key);
        else if (key == "tversky.gamma") cfg.tversky.gamma = parse_real(value, key);
        else if (key == "tversky.epsilon") cfg.tversky.epsilon = parse_real(value, key);
        else if (key == "register.true_field") cfg.true_field_path = value;
        else if (key == "evaluate.experiment") cfg.experiment = value;
        else if (key == "evaluate.oracle") cfg.eval_oracle = value;
        else if (key == "evaluate.intensity") cfg.eval_intensity = value;
        else if (key == "evaluate.roi") cfg.eval_roi = value;
        else if (key == "evaluate.baseline") cfg.eval_baseline = parse_bool(value, key);
        else if (key.rfind("evaluate.pred.", 0) == 0) {
            const std::string name = key.substr(std::string("evaluate.pred.").size());
            if (name.empty()) throw ConfigError("evaluate.pred.<name>: empty name");
            cfg.eval_preds.emplace_back(name, value);
        } else if (key == "evaluate.slice_axis") {
            cfg.eval_slice_axis = static_cast<int>(parse_int(value, key));
        } else if (key == "output.dir") {
            cfg.out_dir = value;
        } else {
            throw ConfigError("unknown configuration key '" + key + "'");
        }
    }
    if (cfg.has_phantom && cfg.has_file_inputs()) {
        throw ConfigError("config mixes phantom.* and input.* sections; use exactly one");
    }
    return cfg;
}

PipelineConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config_text(os.str());
}

namespace {

struct Resolved {
    PipelineConfig cfg;
    fs::path out;
};

Resolved resolve(const PipelineConfig& cfg_in, const CommandOptions& opt) {
    Resolved r{cfg_in, {}};
    if (!opt.out_override.empty()) r.cfg.out_dir = opt.out_override;
    if (opt.seed_override) {
        r.cfg.phantom.seed = *opt.seed_override;
        r.cfg.solver.seed = *opt.seed_override;
    }
    r.out = fs::path(r.cfg.out_dir);
    std::error_code ec;
    fs::create_directories(r.out, ec);
    if (ec) throw IoError("cannot create output directory " + r.out.string());
    return r;
}

void log_line(const CommandOptions& opt, const std::string& msg) {
    if (opt.verbose) std::cout << msg << "\n";
}

int input_error(const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    return kExitInputError;
}

}  // namespace

int cmd_phantom(const PipelineConfig& cfg_in, const CommandOptions& opt) {
    try {
        auto [cfg, out] = resolve(cfg_in, opt);
        if (!cfg.has_phantom) {
            return input_error("phantom command needs a phantom.* section in the config");
        }
        const PhantomPair pair = generate_pair(cfg.phantom);
        write_nifti(pair.mod_a, (out / "mod_a.nii").string());
        write_nifti(pair.mod_b, (out / "mod_b.nii").string());
        write_nifti(pair.label_a, (out / "label_a.nii").string());
        write_nifti(pair.label_b_oracle, (out / "label_b_oracle.nii").string());
        write_nifti(pair.organ_b, (out / "organ_b.nii").string());
        write_field(pair.phi_true, (out / "phi_true.dfield").string());
        CsvTable manifest;
        manifest.header = {"artifact", "value"};
        manifest.rows = {
            {"mod_a", "mod_a.nii"},
            {"mod_b", "mod_b.nii"},
            {"label_a", "label_a.nii"},
            {"label_b_oracle", "label_b_oracle.nii"},
            {"organ_b", "organ_b.nii"},
            {"phi_true", "phi_true.dfield"},
            {"seed", std::to_string(cfg.phantom.seed)},
        };
        write_csv(manifest, (out / "manifest.csv").string());
        log_line(opt, "phantom written to " + out.string());
        return kExitOk;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumericalFailure;
    } catch (const Error& e) {
        return input_error(e.what());
    }
}

namespace {

struct RegisterInputs {
    Volume fixed;
    Volume moving;
    std::optional<DisplacementField> true_field;
};

RegisterInputs load_register_inputs(const PipelineConfig& cfg) {
    RegisterInputs in;
    if (cfg.has_phantom) {
        const PhantomPair pair = generate_pair(cfg.phantom);
        in.fixed = pair.mod_b;   // modality B plays the intra-operative role
        in.moving = pair.mod_a;  // modality A carries the labels
        in.true_field = pair.phi_true;
    } else {
        if (cfg.input_fixed.empty() || cfg.input_moving.empty()) {
            throw ConfigError("register needs input.fixed and input.moving (or a phantom section)");
        }
        in.fixed = read_nifti_volume(cfg.input_fixed);
        in.moving = read_nifti_volume(cfg.input_moving);
    }
    if (!cfg.true_field_path.empty()) {
        in.true_field = read_field(cfg.true_field_path);
    }
    return in;
}

void preprocess_pair(const PipelineConfig& cfg, Volume& fixed, Volume& moving) {
    if (cfg.window_enabled && cfg.window_target != "none") {
        Volume& target = cfg.window_target == "fixed" ? fixed : moving;
        target = window_level(target, cfg.window_level_value, cfg.window_width);
    }
    if (cfg.resample_enabled) {
        fixed = resample_to_spacing(fixed, cfg.target_spacing);
        moving = resample_to_spacing(moving, cfg.target_spacing);
    }
    if (!(fixed.dims() == moving.dims())) {
        const Dims3 common{std::max(fixed.dims().nx, moving.dims().nx),
                           std::max(fixed.dims().ny, moving.dims().ny),
                           std::max(fixed.dims().nz, moving.dims().nz)};
        fixed = pad_to_dims(fixed, common);
        moving = pad_to_dims(moving, common);
    }
    if (cfg.normalize) {
        fixed = minmax_normalize(fixed);
        moving = minmax_normalize(moving);
    }
}

void write_trace_rows(const std::vector<TraceRow>& rows, const std::string& path) {
    CsvTable t;
    t.header = {"iteration", "level", "total", "sim", "sim_down", "smooth", "smooth_down",
                "cycle"};
    for (const TraceRow& r : rows) {
        t.rows.push_back({std::to_string(r.iteration), std::to_string(r.level),
                          format_double(r.objective), format_double(r.terms.sim),
                          format_double(r.terms.sim_down), format_double(r.terms.smooth),
                          format_double(r.terms.smooth_down), format_double(r.cycle)});
    }
    write_csv(t, path);
}

}  // namespace

int cmd_register(const PipelineConfig& cfg_in, const CommandOptions& opt) {
    fs::path out;
    try {
        auto resolved = resolve(cfg_in, opt);
        const PipelineConfig& cfg = resolved.cfg;
        out = resolved.out;
        RegisterInputs in = load_register_inputs(cfg);
        preprocess_pair(cfg, in.fixed, in.moving);
        log_line(opt, "registering " + to_string(in.fixed.dims()));

        RegResult result = register_volumes(in.fixed, in.moving, cfg.solver);

        write_field(result.phi_fwd, (out / "phi_fwd.dfield").string());
        write_field(result.phi_bwd, (out / "phi_bwd.dfield").string());
        write_trace_rows(result.loss_trace, (out / "loss_trace.csv").string());
        write_nifti(jacobian_determinant(result.phi_fwd), (out / "jacobian.nii").string());

        CsvTable summary;
        summary.header = {"key", "value"};
        summary.rows.push_back({"converged", result.converged ? "true" : "false"});
        summary.rows.push_back(
            {"jacobian_positive_fraction", format_double(result.jacobian_positive_fraction)});
        summary.rows.push_back(
            {"mean_fwd_magnitude", format_double(result.phi_fwd.mean_magnitude())});
        summary.rows.push_back(
            {"final_objective", format_double(result.loss_trace.back().objective)});
        if (in.true_field) {
            const double epe = mean_endpoint_error(result.phi_fwd, *in.true_field);
            summary.rows.push_back({"mean_endpoint_error", format_double(epe)});
            std::cout << "mean_endpoint_error " << format_double(epe) << "\n";
        }
        write_csv(summary, (out / "summary.csv").string());
        std::cout << "mean_fwd_magnitude " << format_double(result.phi_fwd.mean_magnitude())
                  << "\n";
        std::cout << "jacobian_positive_fraction "
                  << format_double(result.jacobian_positive_fraction) << "\n";
        return kExitOk;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        // Preserve the trace collected so far for post-mortem inspection.
        if (!out.empty()) {
            std::ofstream trace(out / "loss_trace.csv");
            for (const std::string& row : e.trace_rows) trace << row << "\n";
        }
        return kExitNumericalFailure;
    } catch (const Error& e) {
        return input_error(e.what());
    }
}

int cmd_propagate(const PipelineConfig& cfg_in, const CommandOptions& opt) {
    try {
        auto [cfg, out] = resolve(cfg_in, opt);
        LabelMask moving_label;
        if (cfg.has_phantom) {
            moving_label = generate_pair(cfg.phantom).label_a;
        } else if (!cfg.input_moving_label.empty()) {
            moving_label = read_nifti_label(cfg.input_moving_label);
        } else {
            return input_error(
                "propagate needs input.moving_label (or a phantom section)");
        }
        const fs::path field_path = out / "phi_fwd.dfield";
        const DisplacementField phi_fwd = read_field(field_path.string());
        if (!(phi_fwd.dims() == moving_label.dims())) {
            return input_error("field extents " + to_string(phi_fwd.dims()) +
                               " do not match label extents " + to_string(moving_label.dims()));
        }
        const LabelMask pseudo = warp_label(moving_label, phi_fwd);
        write_nifti(pseudo, (out / "pseudo_label.nii").string());
        log_line(opt, "pseudo-label written to " + (out / "pseudo_label.nii").string());
        return kExitOk;
    } catch (const Error& e) {
        return input_error(e.what());
    }
}

int cmd_evaluate(const PipelineConfig& cfg_in, const CommandOptions& opt) {
    try {
        auto [cfg, out] = resolve(cfg_in, opt);

        LabelMask oracle;
        std::optional<Volume> intensity;
        std::optional<LabelMask> roi;
        if (cfg.has_phantom) {
            PhantomPair pair = generate_pair(cfg.phantom);
            oracle = std::move(pair.label_b_oracle);
            intensity = std::move(pair.mod_b);
            roi = std::move(pair.organ_b);
        } else {
            if (cfg.eval_oracle.empty()) {
                return input_error("evaluate needs evaluate.oracle (or a phantom section)");
            }
            oracle = read_nifti_label(cfg.eval_oracle);
            if (!cfg.eval_intensity.empty()) intensity = read_nifti_volume(cfg.eval_intensity);
            if (!cfg.eval_roi.empty()) roi = read_nifti_label(cfg.eval_roi);
        }

        std::vector<std::pair<std::string, LabelMask>> predictions;
        if (cfg.eval_baseline) {
            if (!intensity || !roi) {
                return input_error(
                    "evaluate.baseline needs evaluate.intensity and evaluate.roi "
                    "(or a phantom section)");
            }
            LabelMask baseline = intensity_baseline_segment(*intensity, *roi);
            write_nifti(baseline, (out / "baseline_label.nii").string());
            predictions.emplace_back("intensity_baseline", std::move(baseline));
        }
        for (const auto& [name, path] : cfg.eval_preds) {
            predictions.emplace_back(name, read_nifti_label(path));
        }
        if (predictions.empty()) {
            return input_error("evaluate has no predictions (evaluate.pred.<name> or baseline)");
        }

        double mi_bits = -1.0;
        if (intensity && roi) {
            mi_bits = mutual_information(*intensity, oracle, 32, &*roi);
        }

        CsvTable cases;
        cases.header = {"experiment", "prediction", "jaccard", "dice", "localization", "mi_bits"};
        std::map<std::string, std::vector<std::array<double, 2>>> grouped;  // name -> (J, D)
        for (const auto& [name, pred] : predictions) {
            if (!(pred.dims() == oracle.dims())) {
                return input_error("prediction '" + name + "' extents " + to_string(pred.dims()) +
                                   " do not match oracle extents " + to_string(oracle.dims()));
            }
            const double j = jaccard(pred, oracle);
            const double dsc = dice_coefficient(pred, oracle);
            const bool loc = localization_hit(pred, oracle);
            grouped[name].push_back({j, dsc});
            cases.rows.push_back({cfg.experiment, name, format_double(j), format_double(dsc),
                                  loc ? "true" : "false",
                                  mi_bits >= 0.0 ? format_double(mi_bits) : ""});
            std::cout << name << " dice " << format_double(dsc) << " jaccard " << format_double(j)
                      << " localization " << (loc ? "true" : "false") << "\n";
        }
        {
            std::vector<double> js, ds;
            for (const auto& [name, jd] : grouped) {
                (void)name;
                for (const auto& v : jd) {
                    js.push_back(v[0]);
                    ds.push_back(v[1]);
                }
            }
            cases.rows.push_back({cfg.experiment, "median", format_double(median_score(js)),
                                  format_double(median_score(ds)), "",
                                  mi_bits >= 0.0 ? format_double(mi_bits) : ""});
        }
        write_csv(cases, (out / "cases.csv").string());

        // Aggregate report: one row per prediction name, median and min-max.
        std::vector<ReportRow> report;
        for (const auto& [name, jd] : grouped) {
            std::vector<double> js, ds;
            for (const auto& v : jd) {
                js.push_back(v[0]);
                ds.push_back(v[1]);
            }
            ReportRow row;
            row.experiment = cfg.experiment;
            row.combination = name;
            row.jaccard_median = median_score(js);
            row.jaccard_min = *std::min_element(js.begin(), js.end());
            row.jaccard_max = *std::max_element(js.begin(), js.end());
            row.dice_median = median_score(ds);
            row.dice_min = *std::min_element(ds.begin(), ds.end());
            row.dice_max = *std::max_element(ds.begin(), ds.end());
            report.push_back(row);
        }
        write_report(report, (out / "report.csv").string());

        if (intensity && !oracle.empty_mask()) {
            // Slice through the oracle centroid for a quick visual check.
            const Dims3& d = oracle.dims();
            double cx = 0, cy = 0, cz = 0;
            std::size_t n = 0;
            std::size_t i = 0;
            for (int z = 0; z < d.nz; ++z) {
                for (int y = 0; y < d.ny; ++y) {
                    for (int x = 0; x < d.nx; ++x, ++i) {
                        if (oracle[i]) {
                            cx += x;
                            cy += y;
                            cz += z;
                            ++n;
                        }
                    }
                }
            }
            const int axis = cfg.eval_slice_axis;
            const double c = axis == 0 ? cx : axis == 1 ? cy : cz;
            const int index = static_cast<int>(std::lround(c / static_cast<double>(n)));
            for (const auto& [name, pred] : predictions) {
                write_slice_ppm(*intensity, axis, index, &oracle, &pred,
                                (out / ("slice_" + name + ".ppm")).string());
            }
        }
        return kExitOk;
    } catch (const Error& e) {
        return input_error(e.what());
    }
}

namespace {

struct Check {
    std::string name;
    bool passed;
    std::string detail;
};

Volume make_test_volume(Dims3 d, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Volume v(d);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(uni(rng));
    return v;
}

DisplacementField make_test_field(Dims3 d, unsigned seed, double lo, double hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(lo, hi);
    DisplacementField f(d);
    for (double& v : f.raw()) v = uni(rng);
    return f;
}

}  // namespace

int cmd_selftest(const CommandOptions& opt, SelftestFault fault) {
    (void)opt;
    std::vector<Check> checks;

    {  // zero-field warp is the identity
        Volume v = make_test_volume({8, 8, 8}, 11);
        DisplacementField zero(v.dims());
        const Volume w = warp_image(v, zero);
        checks.push_back({"warp_zero_field_identity", w.data() == v.data(), ""});
    }
    {  // constant integer translation recovered in the interior
        const Dims3 d{8, 8, 8};
        Volume v = make_test_volume(d, 12);
        DisplacementField shift(d);
        shift.fill(2.0, 0.0, 0.0);
        const Volume w = warp_image(v, shift);
        bool ok = true;
        for (int z = 0; z < d.nz && ok; ++z) {
            for (int y = 0; y < d.ny && ok; ++y) {
                for (int x = 0; x < d.nx - 2 && ok; ++x) {
                    ok = w.at(x, y, z) == v.at(x + 2, y, z);
                }
            }
        }
        checks.push_back({"warp_integer_translation", ok, ""});
    }
    {  // Jacobian of u = 0.1 p is 1.1^3 at interior voxels
        const Dims3 d{8, 8, 8};
        DisplacementField f(d);
        std::size_t i = 0;
        for (int z = 0; z < d.nz; ++z) {
            for (int y = 0; y < d.ny; ++y) {
                for (int x = 0; x < d.nx; ++x, ++i) {
                    f.u(i, 0) = 0.1 * x;
                    f.u(i, 1) = 0.1 * y;
                    f.u(i, 2) = 0.1 * z;
                }
            }
        }
        const Volume det = jacobian_determinant(f);
        bool ok = true;
        for (int z = 1; z < d.nz - 1 && ok; ++z) {
            for (int y = 1; y < d.ny - 1 && ok; ++y) {
                for (int x = 1; x < d.nx - 1 && ok; ++x) {
                    ok = std::abs(det.at(x, y, z) - 1.331) < 1e-6;
                }
            }
        }
        checks.push_back({"jacobian_affine_value", ok, ""});
    }
    {  // lcc(a, a) = -1 on noisy content; affine invariance
        Volume a = make_test_volume({8, 8, 8}, 13);
        const double self = lcc_similarity_loss(a, a, 1);
        Volume b(a.dims());
        for (std::size_t i = 0; i < a.size(); ++i) b[i] = 2.0f * a[i] + 3.0f;
        const double affine = lcc_similarity_loss(a, b, 1);
        checks.push_back({"lcc_self_similarity", std::abs(self + 1.0) < 1e-9, ""});
        checks.push_back({"lcc_affine_invariance", std::abs(affine - self) < 1e-7, ""});
    }
    {  // analytic gradient vs central finite differences
        const Dims3 d{6, 6, 6};
        EnergyConfig ecfg;
        ecfg.lcc_radius = 1;
        double max_rel = 0.0;
        for (unsigned seed = 1; seed <= 2; ++seed) {
            Volume fixed = make_test_volume(d, 100 + seed);
            Volume moving = make_test_volume(d, 200 + seed);
            DisplacementField ff = make_test_field(d, 300 + seed, 0.05, 0.45);
            DisplacementField fb = make_test_field(d, 400 + seed, -0.45, -0.05);
            auto [gf, gb] = total_loss_gradient(fixed, moving, ff, fb, ecfg);
            if (fault == SelftestFault::smoothness_gradient_sign) {
                // Fault hook: replace the smoothness term's gradient with its
                // negation so the finite-difference check must trip.
                EnergyConfig smooth_only = ecfg;
                smooth_only.w_sim = 0.0;
                smooth_only.w_sim_down = 0.0;
                smooth_only.w_smooth_down = 0.0;
                auto [sgf, sgb] = total_loss_gradient(fixed, moving, ff, fb, smooth_only);
                for (std::size_t k = 0; k < gf.raw().size(); ++k) {
                    gf.raw()[k] -= 2.0 * sgf.raw()[k];
                    gb.raw()[k] -= 2.0 * sgb.raw()[k];
                }
            }
            const double h = 1e-3;
            std::mt19937_64 pick(500 + seed);
            std::uniform_int_distribution<std::size_t> voxel(0, d.count() - 1);
            std::uniform_int_distribution<int> comp(0, 2);
            for (int t = 0; t < 12; ++t) {
                const std::size_t vi = voxel(pick);
                const int c = comp(pick);
                const bool fwd = t % 2 == 0;
                DisplacementField& target = fwd ? ff : fb;
                const double saved = target.u(vi, c);
                target.u(vi, c) = saved + h;
                const double up = total_loss(fixed, moving, ff, fb, ecfg).total;
                target.u(vi, c) = saved - h;
                const double dn = total_loss(fixed, moving, ff, fb, ecfg).total;
                target.u(vi, c) = saved;
                const double fd = (up - dn) / (2 * h);
                const double an = fwd ? gf.u(vi, c) : gb.u(vi, c);
                const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
                max_rel = std::max(max_rel, rel);
            }
        }
        std::ostringstream detail;
        detail << "max relative error " << max_rel;
        checks.push_back({"total_loss_gradient_finite_difference", max_rel < 1e-4, detail.str()});
    }
    {  // Tversky reductions and the DSC/Jaccard relation
        std::mt19937_64 rng(77);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        const Dims3 d{6, 6, 6};
        bool ok = true;
        for (int t = 0; t < 20 && ok; ++t) {
            std::vector<float> p(d.count());
            std::vector<std::uint8_t> g(d.count());
            for (auto& v : p) v = static_cast<float>(uni(rng));
            for (auto& v : g) v = uni(rng) < 0.3 ? 1 : 0;
            SoftPrediction pred(d, p);
            LabelMask gt(d, g);
            const double ti_half = tversky_index(pred, gt, 0.5, 0.5);
            const double soft_dice =
                [&] {
                    double tp = 0, sp = 0, sg = 0;
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        tp += p[i] * g[i];
                        sp += p[i];
                        sg += g[i];
                    }
                    return 2 * tp / (sp + sg);
                }();
            ok = std::abs(ti_half - soft_dice) < 1e-12;
            LabelMask pb(d);
            for (std::size_t i = 0; i < p.size(); ++i) pb[i] = p[i] > 0.5f ? 1 : 0;
            const double j = jaccard(pb, gt);
            const double dsc = dice_coefficient(pb, gt);
            ok = ok && std::abs(dsc - 2 * j / (1 + j)) < 1e-12;
        }
        checks.push_back({"tversky_dice_jaccard_identities", ok, ""});
    }

    bool all = true;
    for (const Check& c : checks) {
        std::cout << (c.passed ? "[ok]   " : "[FAIL] ") << c.name;
        if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
        std::cout << "\n";
        all = all && c.passed;
    }
    return all ? kExitOk : kExitSelftestFailure;
}

}  // namespace crossreg

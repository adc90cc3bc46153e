#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crossreg/metrics.hpp"
#include "crossreg/phantom.hpp"
#include "crossreg/solver.hpp"

namespace crossreg {

// Parsed form of the line-oriented "key = value" pipeline configuration.
// Exactly one of the file-input section and the phantom section may be
// present; commands that need the other report a configuration error.
struct PipelineConfig {
    // file inputs
    std::string input_fixed;
    std::string input_moving;
    std::string input_moving_label;

    // phantom inputs
    bool has_phantom = false;
    PhantomSpec phantom;

    // preprocessing (applied by cmd_register)
    bool window_enabled = false;
    double window_level_value = 50.0;
    double window_width = 350.0;
    std::string window_target = "fixed";  // fixed | moving | none
    bool resample_enabled = false;
    std::array<double, 3> target_spacing{1.0, 1.0, 1.0};
    bool normalize = true;

    SolverConfig solver;
    TverskyParams tversky;

    // optional ground-truth field for endpoint-error scoring in cmd_register
    std::string true_field_path;

    // evaluation
    std::string experiment = "experiment";
    std::string eval_oracle;
    std::string eval_intensity;
    std::string eval_roi;
    bool eval_baseline = false;  // add an Otsu threshold prediction
    std::vector<std::pair<std::string, std::string>> eval_preds;  // (combination, path)
    int eval_slice_axis = 2;

    std::string out_dir = "out";

    bool has_file_inputs() const { return !input_fixed.empty() || !input_moving.empty(); }
};

PipelineConfig parse_config_text(const std::string& text);
PipelineConfig parse_config_file(const std::string& path);

struct CommandOptions {
    std::string out_override;          // --out
    std::optional<long> seed_override; // --seed
    bool verbose = false;
};

// Exit codes shared by all commands:
//   0 success, 1 selftest failure, 2 input/config error,
//   3 numerical failure (artifacts preserved).
inline constexpr int kExitOk = 0;
inline constexpr int kExitSelftestFailure = 1;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitNumericalFailure = 3;

int cmd_phantom(const PipelineConfig& cfg, const CommandOptions& opt);
int cmd_register(const PipelineConfig& cfg, const CommandOptions& opt);
int cmd_propagate(const PipelineConfig& cfg, const CommandOptions& opt);
int cmd_evaluate(const PipelineConfig& cfg, const CommandOptions& opt);

// Internal consistency checks (analytic vs numeric gradients, loss
// identities, warp oracles). Prints one line per property.
enum class SelftestFault {
    none,
    smoothness_gradient_sign,  // test hook: flips the smoothness gradient term
};
int cmd_selftest(const CommandOptions& opt, SelftestFault fault = SelftestFault::none);

}  // namespace crossreg

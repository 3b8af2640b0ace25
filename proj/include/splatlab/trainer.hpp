// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "splatlab/ambiguity.hpp"
#include "splatlab/losses.hpp"
#include "splatlab/objective.hpp"
#include "splatlab/primitives.hpp"
#include "splatlab/synthscene.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace splatlab {

struct LearningRates {
    double position_init  = 1.6e-4; ///< multiplied by the scene extent
    double position_final = 1.6e-6; ///< multiplied by the scene extent
    double sh_dc          = 2.5e-3;
    double sh_rest        = 2.5e-3 / 20.0;
    double opacity        = 5e-2;
    double scale          = 5e-3;
    double rotation       = 1e-3;
};

struct Toggles {
    bool priors       = true; ///< geometric depth term and depth-backprojected initialization
    bool truncation   = true;
    bool raycolor     = true;
    bool sh_ambi      = true;
    bool naive_normal = false;
};

struct TrainConfig {
    int iterations        = 30000;
    LossWeights weights;
    double lambda_dssim   = kDefaultLambdaDssim;
    double gamma          = 2.0;
    double eta_u          = 0.05;
    double eta_l          = 0.10;
    int selection_interval = 1; ///< iterations between indicator re-selections
    int geo_start         = 1000;
    int amorphous_start   = 7000;
    int raycolor_stop     = 15000; ///< also the end of densification
    LearningRates lr;
    int densify_start     = 500;
    int densify_interval  = 100;
    double densify_grad_threshold = 2e-4;
    double prune_alpha    = 0.005;
    int max_primitives    = 3000;
    int init_points       = 1000;
    int sh_degree         = 3;
    Reduction ray_reduction = Reduction::Sum;
    Toggles toggles;
    std::uint64_t seed    = 0;
    int checkpoint_interval = 0; ///< 0 writes only the final checkpoint
    int image_interval    = 0;   ///< 0 disables periodic image dumps
};

/// Throws ContractViolation unless geo_start < amorphous_start < raycolor_stop <= iterations, every
/// weight and rate is non-negative and the percentiles lie in [0, 0.5).
void
validate(const TrainConfig &config);

/// Schedule thresholds at 1/30, 7/30 and 1/2 of `iterations`, with densification starting at 1/60.
TrainConfig
desk_config(int iterations);

/// Ablation presets named after the table items A-G. Throws ContractViolation for other names.
Toggles
preset_toggles(const std::string &name);

/// Applies "key=on" / "key=off" for keys priors, truncation, raycolor, sh_ambi, naive_normal.
void
apply_toggle(Toggles &toggles, const std::string &assignment);

std::string
config_to_json(const TrainConfig &config);

/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig
config_from_json(const std::string &text);

TrainConfig
read_config(const std::filesystem::path &path);

/// Render settings used for training and for reproducing training-time images: gamma from the
/// config when truncation is on, untruncated otherwise, and contributions below 1/255 skipped.
RenderOptions
training_render_options(const TrainConfig &config);

struct ActiveTerms {
    bool geo       = false;
    bool ray_color = false;
    bool amorphous = false;
};

ActiveTerms
active_terms(const TrainConfig &config, int iteration);

struct AdamHyper {
    double beta1   = 0.9;
    double beta2   = 0.999;
    double epsilon = 1e-15;
};

/// One bias-corrected Adam step; `step` is the 1-based update count.
void
adam_update(std::span<double> params,
            std::span<const double> grads,
            std::span<double> m,
            std::span<double> v,
            double lr,
            long step,
            const AdamHyper &hyper = {});

/// First and second moments laid out like pack_parameters, one block per primitive.
struct AdamState {
    std::vector<double> m, v;
    long step = 0;
};

struct DensifyStats {
    std::vector<double> grad_norm_sum; ///< accumulated |d loss / d mean2d|
    std::vector<int> visible_count;
};

struct DensifyResult {
    int cloned  = 0;
    int pruned  = 0;
    bool capped = false; ///< at least one clone was refused by the hard cap
};

/// Clones primitives whose mean accumulated screen-position gradient exceeds the threshold (the clone
/// sits 0.5 sigma along the largest axis), prunes those with opacity below prune_alpha, keeps the
/// optimizer moments aligned (clones start from zero) and resets the statistics.
DensifyResult
densify_prune(std::vector<GaussianPrimitive> &prims, AdamState &adam, DensifyStats &stats, const TrainConfig &config);

/// The uniform depth-normal loss of the naive ablation arm: the amorphous loss with the mask set to
/// acc_alpha and no selection.
double
naive_normal_loss(const Image &acc_alpha, const Image &depth_normal, const Image &prior_normal);

struct TrainView {
    Camera camera;
    Image color;
    Image prior_depth;
    Image prior_normal;
};

struct TrainData {
    std::vector<TrainView> views;
    double scene_range  = 2.0;
    double scene_extent = 1.0; ///< position learning-rate scale and maximum primitive scale
};

TrainData
make_train_data(const SceneSpec &spec, const Dataset &dataset);

struct StepLog {
    int iteration = 0;
    int view      = 0;
    LossTerms terms;
    std::size_t num_primitives = 0;
    std::size_t num_upper      = 0;
    std::size_t num_lower      = 0;
};

std::string
csv_header();

std::string
csv_row(const StepLog &log);

class Trainer {
  public:
    /// Initializes from the priors (depth_backproject) or uniformly in the bound, per the toggles.
    Trainer(TrainConfig config, TrainData data, const SceneSpec &spec);

    /// Starts from the given primitives.
    Trainer(TrainConfig config, TrainData data, std::vector<GaussianPrimitive> init);

    /// Runs iteration `iteration() + 1`. Throws NumericalError naming a non-finite loss term.
    StepLog step();

    int iteration() const { return iteration_; }
    const TrainConfig &config() const { return config_; }
    const TrainData &data() const { return data_; }
    const std::vector<GaussianPrimitive> &primitives() const { return prims_; }
    const AdamState &optimizer() const { return adam_; }
    const DensifyStats &densify_stats() const { return stats_; }

    /// View index used by the given 1-based iteration (seeded shuffle per epoch).
    int view_for_iteration(int iteration) const;

    double position_lr(int iteration) const;

    /// PLY of the primitives plus `<path>.adam` holding the moments, step and iteration. `comments`
    /// are appended to the PLY header.
    void save_checkpoint(const std::filesystem::path &ply_path, const std::vector<std::string> &comments = {}) const;
    void load_checkpoint(const std::filesystem::path &ply_path);

  private:
    void clamp_parameters();

    TrainConfig config_;
    TrainData data_;
    std::vector<GaussianPrimitive> prims_;
    AdamState adam_;
    DensifyStats stats_;
    DualEndSelection dual_;
    bool selection_valid_ = false;
    int iteration_    = 0;
    bool cap_warned_  = false;
};

struct TrainOutputs {
    std::filesystem::path dir;                  ///< empty: nothing is written
    std::vector<std::string> header_comments;   ///< '#' lines in loss.csv, also checkpoint PLY comments
    std::function<void(const StepLog &)> on_step;
};

/// Runs every remaining iteration, writing loss.csv, checkpoints (checkpoint_final.ply) and image
/// dumps under `out.dir`. On a non-finite loss a diagnostic.txt is written before rethrowing.
std::vector<StepLog>
run_training(Trainer &trainer, const TrainOutputs &out = {});

} // namespace splatlab

// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/trainer.hpp"

#include "splatlab/ambiguity.hpp"
#include "splatlab/ply.hpp"
#include "splatlab/random.hpp"

#include <fmt/format.h>
#include <fmt/os.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace splatlab {

namespace {

constexpr double kMinScale      = 1e-7;
constexpr double kMaxLogit      = 30.0;
constexpr double kMinRenderAlpha = 1.0 / 255.0;

std::uint64_t
mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a * 0x9e3779b97f4a7c15ull + b + 0x632be59bd9b4e019ull;
    x               = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x               = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

using nlohmann::ordered_json;

/// Reads keys from a JSON object while remembering which ones were used.
class KeyReader {
  public:
    KeyReader(const ordered_json &j, std::string where) : j_(j), where_(std::move(where)) {
        require(j.is_object(), fmt::format("config: '{}' must be an object", where_));
    }

    template <typename T>
    void get(const char *key, T &out) {
        if (!j_.contains(key)) return;
        used_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const ordered_json::exception &e) {
            throw ContractViolation(fmt::format("config: bad value for '{}.{}': {}", where_, key, e.what()));
        }
    }

    const ordered_json *child(const char *key) {
        if (!j_.contains(key)) return nullptr;
        used_.insert(key);
        return &j_.at(key);
    }

    void finish() const {
        for (const auto &item : j_.items()) {
            require(used_.count(item.key()) == 1, fmt::format("config: unknown key '{}.{}'", where_, item.key()));
        }
    }

  private:
    const ordered_json &j_;
    std::string where_;
    std::set<std::string> used_;
};

void
write_binary(std::ofstream &out, const std::vector<double> &v) {
    const std::uint64_t n = v.size();
    out.write(reinterpret_cast<const char *>(&n), sizeof n);
    out.write(reinterpret_cast<const char *>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

template <typename T>
std::vector<T>
read_binary(std::ifstream &in, const std::string &what) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char *>(&n), sizeof n);
    if (!in || n > (1ull << 32)) throw IoError("optimizer sidecar: bad length for " + what);
    std::vector<T> v(n);
    in.read(reinterpret_cast<char *>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in) throw IoError("optimizer sidecar: truncated " + what);
    return v;
}

std::filesystem::path
sidecar_path(const std::filesystem::path &ply) {
    return std::filesystem::path(ply.string() + ".adam");
}

std::vector<GaussianPrimitive>
initial_primitives(const TrainConfig &config, const TrainData &data, const SceneSpec &spec) {
    validate(config);
    std::vector<InitView> views;
    for (const TrainView &v : data.views) views.push_back({v.camera, &v.color, &v.prior_depth});
    const int count = std::min(config.init_points, config.max_primitives);
    return init_primitives(spec, views, config.toggles.priors ? InitMode::DepthBackproject : InitMode::Random, count,
                           config.seed, config.sh_degree);
}

} // namespace

void
validate(const TrainConfig &c) {
    require(c.iterations >= 1, "config: iterations must be positive");
    require(c.geo_start < c.amorphous_start && c.amorphous_start < c.raycolor_stop &&
                c.raycolor_stop <= c.iterations,
            fmt::format("config: need geo_start < amorphous_start < raycolor_stop <= iterations (got {} {} {} {})",
                        c.geo_start, c.amorphous_start, c.raycolor_stop, c.iterations));
    require(c.weights.tau >= 0.0 && c.weights.mu1 >= 0.0 && c.weights.mu2 >= 0.0, "config: loss weights must be non-negative");
    require(c.lambda_dssim >= 0.0 && c.lambda_dssim <= 1.0, "config: lambda_dssim must lie in [0, 1]");
    require(c.gamma > 0.0, "config: gamma must be positive");
    require(c.eta_u >= 0.0 && c.eta_u < 0.5 && c.eta_l >= 0.0 && c.eta_l < 0.5, "config: eta_u and eta_l must lie in [0, 0.5)");
    require(c.selection_interval >= 1, "config: selection_interval must be positive");
    const LearningRates &lr = c.lr;
    require(lr.position_init >= 0.0 && lr.position_final >= 0.0 && lr.sh_dc >= 0.0 && lr.sh_rest >= 0.0 &&
                lr.opacity >= 0.0 && lr.scale >= 0.0 && lr.rotation >= 0.0,
            "config: learning rates must be non-negative");
    require(lr.position_init > 0.0 || lr.position_final == 0.0, "config: position decay needs a positive initial rate");
    require(c.densify_interval >= 1 && c.densify_start >= 0, "config: bad densification schedule");
    require(c.densify_grad_threshold >= 0.0 && c.prune_alpha >= 0.0 && c.prune_alpha < 1.0, "config: bad densification thresholds");
    require(c.max_primitives >= 1 && c.init_points >= 1, "config: primitive counts must be positive");
    require(c.sh_degree >= 0 && c.sh_degree <= kMaxShDegree, "config: sh_degree must lie in [0, 3]");
    require(c.checkpoint_interval >= 0 && c.image_interval >= 0, "config: intervals must be non-negative");
}

TrainConfig
desk_config(int iterations) {
    require(iterations >= 4, "desk_config: at least 4 iterations");
    TrainConfig c;
    c.iterations      = iterations;
    c.geo_start       = iterations / 30;
    c.amorphous_start = iterations * 7 / 30;
    c.raycolor_stop   = iterations / 2;
    c.densify_start   = iterations / 60;
    return c;
}

Toggles
preset_toggles(const std::string &name) {
    Toggles t{false, false, false, false, false};
    if (name == "A") return t;
    t.priors = true;
    if (name == "B") return t;
    t.truncation = true;
    if (name == "C") return t;
    if (name == "D") {
        t.raycolor = true;
        return t;
    }
    if (name == "E") {
        t.sh_ambi = true;
        return t;
    }
    if (name == "F") {
        t.raycolor     = true;
        t.naive_normal = true;
        return t;
    }
    if (name == "G") {
        t.raycolor = true;
        t.sh_ambi  = true;
        return t;
    }
    throw ContractViolation(fmt::format("unknown preset '{}' (expected A-G)", name));
}

void
apply_toggle(Toggles &t, const std::string &assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos, fmt::format("toggle '{}' is not key=on|off", assignment));
    const std::string key = assignment.substr(0, eq), value = assignment.substr(eq + 1);
    require(value == "on" || value == "off", fmt::format("toggle '{}' must be on or off", assignment));
    const bool on = value == "on";
    if (key == "priors") {
        t.priors = on;
    } else if (key == "truncation") {
        t.truncation = on;
    } else if (key == "raycolor") {
        t.raycolor = on;
    } else if (key == "sh_ambi") {
        t.sh_ambi = on;
    } else if (key == "naive_normal") {
        t.naive_normal = on;
    } else {
        throw ContractViolation(fmt::format("unknown toggle '{}'", key));
    }
}

std::string
config_to_json(const TrainConfig &c) {
    ordered_json j;
    j["iterations"]   = c.iterations;
    j["weights"]      = {{"tau", c.weights.tau}, {"mu1", c.weights.mu1}, {"mu2", c.weights.mu2}};
    j["lambda_dssim"] = c.lambda_dssim;
    j["gamma"]        = c.gamma;
    j["eta_u"]        = c.eta_u;
    j["eta_l"]        = c.eta_l;
    j["selection_interval"] = c.selection_interval;
    j["geo_start"]          = c.geo_start;
    j["amorphous_start"]    = c.amorphous_start;
    j["raycolor_stop"]      = c.raycolor_stop;
    j["lr"] = {{"position_init", c.lr.position_init}, {"position_final", c.lr.position_final},
               {"sh_dc", c.lr.sh_dc},                 {"sh_rest", c.lr.sh_rest},
               {"opacity", c.lr.opacity},             {"scale", c.lr.scale},
               {"rotation", c.lr.rotation}};
    j["densify_start"]          = c.densify_start;
    j["densify_interval"]       = c.densify_interval;
    j["densify_grad_threshold"] = c.densify_grad_threshold;
    j["prune_alpha"]            = c.prune_alpha;
    j["max_primitives"]         = c.max_primitives;
    j["init_points"]            = c.init_points;
    j["sh_degree"]              = c.sh_degree;
    j["ray_reduction"]          = c.ray_reduction == Reduction::Sum ? "sum" : "mean";
    j["toggles"] = {{"priors", c.toggles.priors},     {"truncation", c.toggles.truncation},
                    {"raycolor", c.toggles.raycolor}, {"sh_ambi", c.toggles.sh_ambi},
                    {"naive_normal", c.toggles.naive_normal}};
    j["seed"]                = c.seed;
    j["checkpoint_interval"] = c.checkpoint_interval;
    j["image_interval"]      = c.image_interval;
    return j.dump(2);
}

TrainConfig
config_from_json(const std::string &text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const ordered_json::exception &e) {
        throw ContractViolation(fmt::format("config: invalid JSON: {}", e.what()));
    }
    TrainConfig c;
    KeyReader r(j, "config");
    r.get("iterations", c.iterations);
    if (const auto *w = r.child("weights")) {
        KeyReader rw(*w, "weights");
        rw.get("tau", c.weights.tau);
        rw.get("mu1", c.weights.mu1);
        rw.get("mu2", c.weights.mu2);
        rw.finish();
    }
    r.get("lambda_dssim", c.lambda_dssim);
    r.get("gamma", c.gamma);
    r.get("eta_u", c.eta_u);
    r.get("eta_l", c.eta_l);
    r.get("selection_interval", c.selection_interval);
    r.get("geo_start", c.geo_start);
    r.get("amorphous_start", c.amorphous_start);
    r.get("raycolor_stop", c.raycolor_stop);
    if (const auto *l = r.child("lr")) {
        KeyReader rl(*l, "lr");
        rl.get("position_init", c.lr.position_init);
        rl.get("position_final", c.lr.position_final);
        rl.get("sh_dc", c.lr.sh_dc);
        rl.get("sh_rest", c.lr.sh_rest);
        rl.get("opacity", c.lr.opacity);
        rl.get("scale", c.lr.scale);
        rl.get("rotation", c.lr.rotation);
        rl.finish();
    }
    r.get("densify_start", c.densify_start);
    r.get("densify_interval", c.densify_interval);
    r.get("densify_grad_threshold", c.densify_grad_threshold);
    r.get("prune_alpha", c.prune_alpha);
    r.get("max_primitives", c.max_primitives);
    r.get("init_points", c.init_points);
    r.get("sh_degree", c.sh_degree);
    std::string reduction = c.ray_reduction == Reduction::Sum ? "sum" : "mean";
    r.get("ray_reduction", reduction);
    require(reduction == "sum" || reduction == "mean", "config: ray_reduction must be sum or mean");
    c.ray_reduction = reduction == "sum" ? Reduction::Sum : Reduction::Mean;
    if (const auto *t = r.child("toggles")) {
        KeyReader rt(*t, "toggles");
        rt.get("priors", c.toggles.priors);
        rt.get("truncation", c.toggles.truncation);
        rt.get("raycolor", c.toggles.raycolor);
        rt.get("sh_ambi", c.toggles.sh_ambi);
        rt.get("naive_normal", c.toggles.naive_normal);
        rt.finish();
    }
    r.get("seed", c.seed);
    r.get("checkpoint_interval", c.checkpoint_interval);
    r.get("image_interval", c.image_interval);
    r.finish();
    validate(c);
    return c;
}

TrainConfig
read_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open config '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

RenderOptions
training_render_options(const TrainConfig &config) {
    RenderOptions o;
    o.gamma     = config.toggles.truncation ? config.gamma : kInfiniteGamma;
    o.min_alpha = kMinRenderAlpha;
    return o;
}

ActiveTerms
active_terms(const TrainConfig &c, int iteration) {
    ActiveTerms a;
    a.geo       = c.toggles.priors && iteration >= c.geo_start;
    a.ray_color = c.toggles.raycolor && iteration < c.raycolor_stop;
    a.amorphous = (c.toggles.sh_ambi || c.toggles.naive_normal) && iteration >= c.amorphous_start;
    return a;
}

void
adam_update(std::span<double> params,
            std::span<const double> grads,
            std::span<double> m,
            std::span<double> v,
            double lr,
            long step,
            const AdamHyper &h) {
    require(params.size() == grads.size() && params.size() == m.size() && params.size() == v.size(),
            "adam_update: size mismatch");
    require(step >= 1, "adam_update: step is 1-based");
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i]            = h.beta1 * m[i] + (1.0 - h.beta1) * grads[i];
        v[i]            = h.beta2 * v[i] + (1.0 - h.beta2) * grads[i] * grads[i];
        const double mh = m[i] / bc1, vh = v[i] / bc2;
        params[i] -= lr * mh / (std::sqrt(vh) + h.epsilon);
    }
}

DensifyResult
densify_prune(std::vector<GaussianPrimitive> &prims, AdamState &adam, DensifyStats &stats, const TrainConfig &config) {
    const std::size_t n = prims.size();
    require(stats.grad_norm_sum.size() == n && stats.visible_count.size() == n, "densify_prune: statistics size mismatch");
    std::vector<std::size_t> block(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) block[i + 1] = block[i] + parameters_per_primitive(prims[i].sh.degree);
    require(adam.m.size() == block[n] && adam.v.size() == block[n], "densify_prune: optimizer size mismatch");

    DensifyResult result;
    std::vector<GaussianPrimitive> clones;
    for (std::size_t i = 0; i < n; ++i) {
        if (stats.visible_count[i] == 0) continue;
        if (stats.grad_norm_sum[i] / stats.visible_count[i] <= config.densify_grad_threshold) continue;
        if (n + clones.size() >= static_cast<std::size_t>(config.max_primitives)) {
            result.capped = true;
            continue;
        }
        GaussianPrimitive c = prims[i];
        int axis;
        c.log_scale.maxCoeff(&axis);
        const Vec3 dir = quaternion_to_rotation(c.rotation.normalized()).col(axis);
        c.mu += 0.5 * std::exp(c.log_scale(axis)) * dir;
        clones.push_back(c);
    }
    result.cloned = static_cast<int>(clones.size());

    std::vector<GaussianPrimitive> kept;
    std::vector<double> m, v;
    auto keep = [&](const GaussianPrimitive &p, const double *pm, const double *pv) {
        if (sigmoid(p.opacity_logit) < config.prune_alpha) {
            ++result.pruned;
            return;
        }
        const std::size_t k = parameters_per_primitive(p.sh.degree);
        kept.push_back(p);
        for (std::size_t j = 0; j < k; ++j) {
            m.push_back(pm ? pm[j] : 0.0);
            v.push_back(pv ? pv[j] : 0.0);
        }
    };
    for (std::size_t i = 0; i < n; ++i) keep(prims[i], adam.m.data() + block[i], adam.v.data() + block[i]);
    for (const auto &c : clones) keep(c, nullptr, nullptr);

    prims  = std::move(kept);
    adam.m = std::move(m);
    adam.v = std::move(v);
    stats.grad_norm_sum.assign(prims.size(), 0.0);
    stats.visible_count.assign(prims.size(), 0);
    return result;
}

double
naive_normal_loss(const Image &acc_alpha, const Image &depth_normal, const Image &prior_normal) {
    return amorphous_normal(acc_alpha, depth_normal, prior_normal);
}

TrainData
make_train_data(const SceneSpec &spec, const Dataset &ds) {
    TrainData d;
    d.scene_range  = scene_range(spec);
    d.scene_extent = spec.bound;
    for (std::size_t v = 0; v < ds.cameras.size(); ++v) {
        d.views.push_back({ds.cameras[v], ds.gt[v].color, ds.priors[v].depth, ds.priors[v].normal});
    }
    return d;
}

std::string
csv_header() {
    return "iteration,view,photo,geo,ray_color,amorphous,total,num_primitives,num_upper,num_lower";
}

std::string
csv_row(const StepLog &l) {
    return fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{}", l.iteration, l.view, l.terms.photo,
                       l.terms.geo, l.terms.ray_color, l.terms.amorphous, l.terms.total, l.num_primitives,
                       l.num_upper, l.num_lower);
}

Trainer::Trainer(TrainConfig config, TrainData data, const SceneSpec &spec)
    : Trainer(config, data, initial_primitives(config, data, spec)) {}

Trainer::Trainer(TrainConfig config, TrainData data, std::vector<GaussianPrimitive> init)
    : config_(std::move(config)), data_(std::move(data)), prims_(std::move(init)) {
    validate(config_);
    require(!data_.views.empty(), "trainer: no training views");
    require(data_.scene_extent > 0.0 && data_.scene_range > 0.0, "trainer: scene extent and range must be positive");
    for (const TrainView &v : data_.views) {
        v.camera.validate();
        require(v.color.width == v.camera.width && v.color.height == v.camera.height && v.color.channels == 3,
                "trainer: color target does not match its camera");
    }
    for (const auto &p : prims_) require(p.sh.degree == config_.sh_degree, "trainer: primitive SH degree differs from config");
    std::size_t total = 0;
    for (const auto &p : prims_) total += parameters_per_primitive(p.sh.degree);
    adam_.m.assign(total, 0.0);
    adam_.v.assign(total, 0.0);
    stats_.grad_norm_sum.assign(prims_.size(), 0.0);
    stats_.visible_count.assign(prims_.size(), 0);
    clamp_parameters();
}

int
Trainer::view_for_iteration(int iteration) const {
    const int n     = static_cast<int>(data_.views.size());
    const int epoch = (iteration - 1) / n;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(config_.seed, static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), rng);
    return order[(iteration - 1) % n];
}

double
Trainer::position_lr(int iteration) const {
    const double a = config_.lr.position_init, b = config_.lr.position_final;
    if (a == 0.0) return 0.0;
    const double s = config_.iterations > 1
                         ? std::clamp(static_cast<double>(iteration - 1) / (config_.iterations - 1), 0.0, 1.0)
                         : 1.0;
    if (b == 0.0) return data_.scene_extent * a * (1.0 - s);
    return data_.scene_extent * std::exp((1.0 - s) * std::log(a) + s * std::log(b));
}

void
Trainer::clamp_parameters() {
    const double lo = std::log(kMinScale), hi = std::log(data_.scene_extent);
    for (auto &p : prims_) {
        const double qn = p.rotation.norm();
        p.rotation      = qn > 0.0 && std::isfinite(qn) ? Vec4(p.rotation / qn) : Vec4(1, 0, 0, 0);
        p.log_scale     = p.log_scale.cwiseMax(lo).cwiseMin(hi);
        p.opacity_logit = std::clamp(p.opacity_logit, -kMaxLogit, kMaxLogit);
    }
}

StepLog
Trainer::step() {
    const int it = ++iteration_;
    StepLog log;
    log.iteration = it;
    log.view      = view_for_iteration(it);
    const TrainView &view  = data_.views[log.view];
    const ActiveTerms gate = active_terms(config_, it);

    std::vector<int> selection;
    if (gate.amorphous) {
        if (config_.toggles.sh_ambi) {
            if ((it - config_.amorphous_start) % config_.selection_interval == 0 || !selection_valid_) {
                dual_            = select_dual_end(compute_indicators(prims_), config_.eta_u, config_.eta_l);
                selection_valid_ = true;
            }
            selection     = dual_.all;
            log.num_upper = dual_.upper.size();
            log.num_lower = dual_.lower.size();
        } else {
            selection.resize(prims_.size());
            std::iota(selection.begin(), selection.end(), 0);
        }
    }

    ObjectiveOptions opt;
    opt.render        = training_render_options(config_);
    opt.weights       = config_.weights;
    opt.lambda_dssim  = config_.lambda_dssim;
    opt.ray_reduction = config_.ray_reduction;
    opt.use_geo       = gate.geo;
    opt.use_ray_color = gate.ray_color;
    opt.use_amorphous = gate.amorphous;
    const ViewTargets targets{&view.color, &view.prior_depth, &view.prior_normal, data_.scene_range};
    ViewEvaluation ev = evaluate_view(prims_, view.camera, targets, selection, opt, true);
    log.terms          = ev.terms;
    log.num_primitives = prims_.size();
    try {
        check_finite(ev.terms);
    } catch (const NumericalError &e) {
        throw NumericalError(fmt::format("{} at iteration {} (view {}); photo={} geo={} ray_color={} amorphous={} total={}",
                                         e.what(), it, log.view, ev.terms.photo, ev.terms.geo, ev.terms.ray_color,
                                         ev.terms.amorphous, ev.terms.total));
    }

    Gradients grads = std::move(ev.base);
    if (gate.ray_color) {
        for (std::size_t i = 0; i < grads.size(); ++i) {
            PrimitiveGradient g = ev.ray_color[i];
            g *= config_.weights.mu2;
            grads[i] += g;
        }
    }
    if (gate.amorphous) {
        // The naive arm regularizes every primitive through every parameter; the selective arm routes.
        if (config_.toggles.sh_ambi) routing_mask(selection, prims_.size()).apply(ev.amorphous);
        for (std::size_t i = 0; i < grads.size(); ++i) {
            PrimitiveGradient g = ev.amorphous[i];
            g *= config_.weights.mu1;
            grads[i] += g;
        }
    }

    const bool densifying = it < config_.raycolor_stop;
    if (densifying) {
        // Screen-position gradients in normalized device units, matching the usual clone threshold.
        const double sx = 0.5 * view.camera.width, sy = 0.5 * view.camera.height;
        for (std::size_t i = 0; i < prims_.size(); ++i) {
            if (!ev.render.projections[i].visible) continue;
            stats_.grad_norm_sum[i] += Vec2(grads[i].mean2d.x() * sx, grads[i].mean2d.y() * sy).norm();
            stats_.visible_count[i] += 1;
        }
    }

    // Adam, one group at a time inside each primitive block.
    ++adam_.step;
    Eigen::VectorXd theta     = pack_parameters(prims_);
    const Eigen::VectorXd gv  = pack_gradients(grads);
    const std::array<double, kNumParamGroups> lr = {position_lr(it), config_.lr.scale, config_.lr.rotation,
                                                    config_.lr.opacity, config_.lr.sh_dc, config_.lr.sh_rest};
    std::size_t base = 0;
    for (const auto &p : prims_) {
        const std::size_t k = parameters_per_primitive(p.sh.degree);
        std::size_t start   = 0;
        while (start < k) {
            const ParamGroup g = group_of_offset(start);
            std::size_t end    = start;
            while (end < k && group_of_offset(end) == g) ++end;
            const std::size_t len = end - start, off = base + start;
            adam_update(std::span<double>(theta.data() + off, len), std::span<const double>(gv.data() + off, len),
                        std::span<double>(adam_.m.data() + off, len), std::span<double>(adam_.v.data() + off, len),
                        lr[static_cast<int>(g)], adam_.step);
            start = end;
        }
        base += k;
    }
    unpack_parameters(theta, prims_);
    clamp_parameters();

    if (densifying && it >= config_.densify_start && it % config_.densify_interval == 0) {
        const DensifyResult dr = densify_prune(prims_, adam_, stats_, config_);
        if (dr.capped && !cap_warned_) {
            fmt::print(stderr, "warning: primitive cap {} reached at iteration {}; clones suppressed\n",
                       config_.max_primitives, it);
            cap_warned_ = true;
        }
        if (dr.cloned > 0 || dr.pruned > 0) selection_valid_ = false;
    }
    return log;
}

void
Trainer::save_checkpoint(const std::filesystem::path &ply_path, const std::vector<std::string> &comments) const {
    std::vector<std::string> header{fmt::format("iteration {}", iteration_), fmt::format("seed {}", config_.seed)};
    header.insert(header.end(), comments.begin(), comments.end());
    write_primitives_ply(ply_path, prims_, header);
    std::ofstream out(sidecar_path(ply_path), std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write optimizer sidecar for '{}'", ply_path.string()));
    out << "SPLATADAM 1 " << adam_.step << ' ' << iteration_ << ' ' << (cap_warned_ ? 1 : 0) << '\n';
    write_binary(out, adam_.m);
    write_binary(out, adam_.v);
    write_binary(out, stats_.grad_norm_sum);
    const std::vector<double> counts(stats_.visible_count.begin(), stats_.visible_count.end());
    write_binary(out, counts);
}

void
Trainer::load_checkpoint(const std::filesystem::path &ply_path) {
    auto prims = read_primitives_ply(ply_path);
    std::ifstream in(sidecar_path(ply_path), std::ios::binary);
    if (!in) throw IoError(fmt::format("missing optimizer sidecar for '{}'", ply_path.string()));
    std::string line;
    std::getline(in, line);
    std::istringstream header(line);
    std::string magic;
    int version = 0, capped = 0;
    AdamState adam;
    int iteration = 0;
    header >> magic >> version >> adam.step >> iteration >> capped;
    if (magic != "SPLATADAM" || version != 1 || !header) throw IoError("optimizer sidecar: bad header");
    adam.m            = read_binary<double>(in, "first moments");
    adam.v            = read_binary<double>(in, "second moments");
    auto grad_sum     = read_binary<double>(in, "gradient statistics");
    const auto counts = read_binary<double>(in, "visibility counts");
    std::size_t total = 0;
    for (const auto &p : prims) {
        if (p.sh.degree != config_.sh_degree) throw IoError("checkpoint SH degree differs from the config");
        total += parameters_per_primitive(p.sh.degree);
    }
    if (adam.m.size() != total || adam.v.size() != total || grad_sum.size() != prims.size() || counts.size() != prims.size()) {
        throw IoError("optimizer sidecar does not match the checkpoint");
    }
    prims_     = std::move(prims);
    adam_      = std::move(adam);
    iteration_ = iteration;
    cap_warned_ = capped != 0;
    stats_.grad_norm_sum = std::move(grad_sum);
    stats_.visible_count.assign(counts.begin(), counts.end());
    selection_valid_ = false;
}

std::vector<StepLog>
run_training(Trainer &trainer, const TrainOutputs &out) {
    const TrainConfig &cfg = trainer.config();
    const bool write       = !out.dir.empty();
    std::unique_ptr<fmt::ostream> csv;
    if (write) {
        std::filesystem::create_directories(out.dir);
        if (cfg.image_interval > 0) std::filesystem::create_directories(out.dir / "images");
        csv = std::make_unique<fmt::ostream>(fmt::output_file((out.dir / "loss.csv").string()));
        for (const auto &c : out.header_comments) csv->print("# {}\n", c);
        csv->print("{}\n", csv_header());
    }
    std::vector<StepLog> logs;
    while (trainer.iteration() < cfg.iterations) {
        StepLog log;
        try {
            log = trainer.step();
        } catch (const NumericalError &e) {
            if (write) {
                csv->close();
                auto diag = fmt::output_file((out.dir / "diagnostic.txt").string());
                for (const auto &c : out.header_comments) diag.print("# {}\n", c);
                diag.print("{}\n", e.what());
            }
            throw;
        }
        logs.push_back(log);
        if (write) {
            csv->print("{}\n", csv_row(log));
            const int it = log.iteration;
            if (cfg.checkpoint_interval > 0 && it % cfg.checkpoint_interval == 0 && it < cfg.iterations) {
                trainer.save_checkpoint(out.dir / fmt::format("checkpoint_{:06d}.ply", it), out.header_comments);
            }
            if (cfg.image_interval > 0 && (it % cfg.image_interval == 0 || it == cfg.iterations)) {
                const TrainView &v = trainer.data().views[0];
                const RenderOutputs r =
                    render(trainer.primitives(), v.camera, {}, training_render_options(cfg));
                write_pnm(out.dir / "images" / fmt::format("iter_{:06d}_view_00.ppm", it), r.color);
            }
        }
        if (out.on_step) out.on_step(log);
    }
    if (write) {
        csv->close();
        trainer.save_checkpoint(out.dir / "checkpoint_final.ply", out.header_comments);
    }
    return logs;
}

} // namespace splatlab

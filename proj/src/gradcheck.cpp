#include "venomguard/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "venomguard/dataset.hpp"
#include "venomguard/error.hpp"
#include "venomguard/losses.hpp"
#include "venomguard/prior.hpp"
#include "venomguard/rng.hpp"

namespace venomguard {

GradLoss parse_grad_loss(std::string_view name) {
    if (name == "ce") return GradLoss::CrossEntropy;
    if (name == "seesaw") return GradLoss::Seesaw;
    if (name == "rwwce") return GradLoss::Rwwce;
    if (name == "loc") return GradLoss::Loc;
    throw_argument("unknown loss `" + std::string(name) + "` (expected ce, seesaw, rwwce or loc)");
}

std::string to_string(GradLoss loss) {
    switch (loss) {
        case GradLoss::CrossEntropy: return "ce";
        case GradLoss::Seesaw: return "seesaw";
        case GradLoss::Rwwce: return "rwwce";
        case GradLoss::Loc: return "loc";
    }
    return "?";
}

double relative_error(std::span<const double> a, std::span<const double> n) {
    if (a.size() != n.size()) throw_argument("relative_error: length mismatch");
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - n[i]) * (a[i] - n[i]);
        na += a[i] * a[i];
        nn += n[i] * n[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
}

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double step) {
    std::vector<double> point(x.begin(), x.end());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + step;
        const double up = f(point);
        point[i] = saved - step;
        const double down = f(point);
        point[i] = saved;
        out[i] = (up - down) / (2.0 * step);
    }
    return out;
}

namespace {

std::vector<double> random_logits(Rng& rng, std::size_t classes) {
    std::vector<double> z(classes);
    for (double& v : z) v = rng.normal(0.0, 2.0);
    return z;
}

double check_ce(Rng& rng, double step) {
    const std::size_t C = 2 + rng.index(6);
    const auto z = random_logits(rng, C);
    const ClassId y = rng.index(C);
    const auto analytic = cross_entropy(z, y).grad;
    const auto numeric =
        central_difference([&](std::span<const double> p) { return cross_entropy(p, y).value; }, z, step);
    return relative_error(analytic, numeric);
}

double check_seesaw(Rng& rng, const GradCheckOptions& o) {
    const double step = o.step;
    const std::size_t C = 2 + rng.index(6);
    const auto z = random_logits(rng, C);
    const ClassId y = rng.index(C);
    std::vector<std::uint64_t> counts(C);
    for (auto& c : counts) c = 1 + rng.index(500);
    const SeesawState state(counts, o.seesaw_p, o.seesaw_q);
    const auto factors = seesaw_factors(z, y, state);
    const auto analytic = seesaw_loss_with_factors(z, y, factors).grad;
    const auto numeric = central_difference(
        [&](std::span<const double> p) { return seesaw_loss_with_factors(p, y, factors).value; }, z,
        step);
    return relative_error(analytic, numeric);
}

double check_rwwce(Rng& rng, const GradCheckOptions& o) {
    const double step = o.step;
    const std::size_t C = 2 + rng.index(6);
    std::vector<ClassEntry> entries(C);
    for (ClassId c = 0; c < C; ++c) entries[c] = {c, "c" + std::to_string(c), rng.bernoulli(0.4)};
    entries[0].venomous = true;
    entries[1].venomous = false;
    const ClassTable classes(entries);
    const auto cost = build_cost_matrix(classes, o.cost);
    std::vector<double> fn_weight(C);
    for (double& w : fn_weight) w = rng.uniform(0.5, 3.0);
    const auto z = random_logits(rng, C);
    const ClassId y = rng.index(C);
    const auto analytic = rwwce_loss(z, y, cost, fn_weight, o.clamp).grad;
    const auto numeric = central_difference(
        [&](std::span<const double> p) { return rwwce_loss(p, y, cost, fn_weight, o.clamp).value; }, z, step);
    return relative_error(analytic, numeric);
}

double check_loc(Rng& rng, double step) {
    const std::size_t C = 2 + rng.index(6);
    const PriorMlpShape shape{1 + rng.index(5), 1 + rng.index(6), 1 + rng.index(5)};
    PriorMlp model = PriorMlp::initialized(shape, 0.3, rng.next_u64());
    for (double& w : model.parameters()) w += rng.normal(0.0, 0.1);

    FeatureMatrix proto(C, shape.output_dims);
    for (double& v : proto.values()) v = rng.normal();
    const PrototypeMatrix prototypes{proto, false};

    const std::size_t batch = 1 + rng.index(3);
    FeatureMatrix x(batch, shape.input_dims), r(batch, shape.input_dims);
    for (double& v : x.values()) v = rng.normal();
    for (double& v : r.values()) v = rng.uniform(-2.0, 2.0);
    std::vector<ClassId> labels(batch);
    for (auto& y : labels) y = rng.index(C);
    std::vector<DropoutMasks> x_masks, r_masks;
    for (std::size_t b = 0; b < batch; ++b) {
        x_masks.push_back(sample_dropout_masks(model, rng));
        r_masks.push_back(sample_dropout_masks(model, rng));
    }
    const double lambda = rng.uniform(1.0, 10.0);
    const LocBatch data{&x, &r, labels, x_masks, r_masks};

    const auto analytic = loc_loss_batch(model, data, prototypes, lambda).grad;
    const std::vector<double> base(model.parameters().begin(), model.parameters().end());
    PriorMlp probe = model;
    const auto numeric = central_difference(
        [&](std::span<const double> p) {
            std::copy(p.begin(), p.end(), probe.parameters().begin());
            return loc_loss_batch(probe, data, prototypes, lambda).value;
        },
        base, step);

    double worst = 0.0;
    for (std::size_t l = 0; l < 3; ++l) {
        const auto view = model.layer(l);
        const std::span<const double> a(analytic), n(numeric);
        worst = std::max(worst, relative_error(a.subspan(view.offset, view.rows * view.cols),
                                               n.subspan(view.offset, view.rows * view.cols)));
        worst = std::max(worst, relative_error(a.subspan(view.bias_offset, view.rows),
                                               n.subspan(view.bias_offset, view.rows)));
    }
    return worst;
}

}  // namespace

GradCheckResult run_gradcheck(GradLoss loss, const GradCheckOptions& options) {
    if (options.trials == 0) throw_argument("gradcheck needs at least one trial");
    if (!(options.step > 0.0)) throw_argument("gradcheck step must be positive");
    Rng rng(options.seed ^ (static_cast<std::uint64_t>(loss) + 1) * 0x9e3779b97f4a7c15ULL);
    GradCheckResult result;
    result.loss = loss;
    result.trials = options.trials;
    for (std::size_t t = 0; t < options.trials; ++t) {
        double err = 0.0;
        switch (loss) {
            case GradLoss::CrossEntropy: err = check_ce(rng, options.step); break;
            case GradLoss::Seesaw: err = check_seesaw(rng, options); break;
            case GradLoss::Rwwce: err = check_rwwce(rng, options); break;
            case GradLoss::Loc: err = check_loc(rng, options.step); break;
        }
        if (!std::isfinite(err)) err = INFINITY;
        result.max_rel_error = std::max(result.max_rel_error, err);
    }
    result.passed = result.max_rel_error < options.tolerance;
    return result;
}

}  // namespace venomguard

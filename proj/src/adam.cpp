#include "thermsplat/adam.hpp"

#include <algorithm>
#include <cmath>

#include "thermsplat/error.hpp"

namespace thermsplat::model {

void AdamState::configure(const std::string& name, double lr, double weight_decay) {
    for (AdamGroup& g : groups_) {
        if (g.name == name) {
            g.lr = lr;
            g.weight_decay = weight_decay;
            return;
        }
    }
    groups_.push_back(AdamGroup{name, lr, weight_decay, {}, {}});
}

bool AdamState::has_group(const std::string& name) const {
    return std::any_of(groups_.begin(), groups_.end(), [&](const AdamGroup& g) { return g.name == name; });
}

AdamGroup& AdamState::group(const std::string& name) {
    for (AdamGroup& g : groups_) {
        if (g.name == name) return g;
    }
    throw UsageError("unknown optimizer group '" + name + "'");
}

const AdamGroup& AdamState::group(const std::string& name) const {
    return const_cast<AdamState*>(this)->group(name);
}

void AdamState::compact(const std::string& name, const std::vector<bool>& keep, std::size_t stride) {
    AdamGroup& g = group(name);
    if (g.m.empty()) return;
    if (g.m.size() != keep.size() * stride) {
        throw UsageError("optimizer group '" + name + "' does not match the prune mask");
    }
    std::size_t w = 0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        for (std::size_t k = 0; k < stride; ++k) {
            g.m[w] = g.m[i * stride + k];
            g.v[w] = g.v[i * stride + k];
            ++w;
        }
    }
    g.m.resize(w);
    g.v.resize(w);
}

void adam_step(AdamState& state, std::span<const ParamGroupView> views) {
    for (const ParamGroupView& view : views) {
        if (view.params.size() != view.grads.size()) {
            throw UsageError("parameter/gradient size mismatch in group '" + view.name + "'");
        }
        for (double g : view.grads) {
            if (!std::isfinite(g)) {
                throw DataError("non-finite gradient in parameter group '" + view.name + "'");
            }
        }
        const AdamGroup& group = state.group(view.name);
        if (!group.m.empty() && group.m.size() != view.params.size()) {
            throw UsageError("optimizer moments of group '" + view.name + "' have the wrong size");
        }
    }
    state.set_step(state.step() + 1);
    const AdamHyper& h = state.hyper();
    const double t = static_cast<double>(state.step());
    const double bias1 = 1.0 - std::pow(h.beta1, t);
    const double bias2 = 1.0 - std::pow(h.beta2, t);
    for (const ParamGroupView& view : views) {
        AdamGroup& group = state.group(view.name);
        if (group.m.empty()) {
            group.m.assign(view.params.size(), 0.0);
            group.v.assign(view.params.size(), 0.0);
        }
        for (std::size_t i = 0; i < view.params.size(); ++i) {
            const double g = view.grads[i];
            group.m[i] = h.beta1 * group.m[i] + (1.0 - h.beta1) * g;
            group.v[i] = h.beta2 * group.v[i] + (1.0 - h.beta2) * g * g;
            const double m_hat = group.m[i] / bias1;
            const double v_hat = group.v[i] / bias2;
            double& w = view.params[i];
            w -= group.lr * (m_hat / (std::sqrt(v_hat) + h.eps) + group.weight_decay * w);
        }
    }
}

}  // namespace thermsplat::model

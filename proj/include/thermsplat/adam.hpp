#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace thermsplat::model {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moments and settings of one named parameter group.
struct AdamGroup {
    std::string name;
    double lr = 1e-3;
    double weight_decay = 0.0;
    std::vector<double> m;
    std::vector<double> v;
};

class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamHyper hyper) : hyper_(hyper) {}

    /// Registers (or re-configures) a group. Moments are sized lazily on the first step.
    void configure(const std::string& name, double lr, double weight_decay = 0.0);

    AdamGroup& group(const std::string& name);
    const AdamGroup& group(const std::string& name) const;
    bool has_group(const std::string& name) const;
    const std::vector<AdamGroup>& groups() const { return groups_; }
    std::vector<AdamGroup>& groups() { return groups_; }

    /// Drops per-element moments of removed items. `keep[i]` refers to blocks of `stride` values.
    void compact(const std::string& name, const std::vector<bool>& keep, std::size_t stride);

    const AdamHyper& hyper() const { return hyper_; }
    std::int64_t step() const { return step_; }
    void set_step(std::int64_t step) { step_ = step; }

private:
    AdamHyper hyper_;
    std::int64_t step_ = 0;
    std::vector<AdamGroup> groups_;
};

struct ParamGroupView {
    std::string name;
    std::span<double> params;
    std::span<const double> grads;
};

/// One bias-corrected Adam step with decoupled weight decay over every view.
/// Gradients are checked for finiteness before anything is modified.
void adam_step(AdamState& state, std::span<const ParamGroupView> views);

}  // namespace thermsplat::model

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nscr/system.hpp"

namespace nscr {

// SGD with momentum. Updates can be restricted to a row/column window of an
// entry, which implements frozen regions exactly (untouched entries keep
// their bit pattern).
class SgdOptimizer {
public:
    struct ParamSel {
        std::string name;
        double lr_scale = 1.0;
        int r0 = -1, r1 = -1; // -1 = full range
        int c0 = -1, c1 = -1;
    };

    SgdOptimizer(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

    void step(ParameterStore& store, const std::vector<ParamSel>& selection);

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

    std::vector<std::uint8_t> serialize_state() const;
    void restore_state(const std::vector<std::uint8_t>& bytes);

private:
    double lr_;
    double momentum_;
    std::map<std::string, Tensor2> velocity_;
};

std::vector<SgdOptimizer::ParamSel> select_all(const ParameterStore& store);
std::vector<SgdOptimizer::ParamSel> select_prefix(const ParameterStore& store,
                                                  const std::string& prefix,
                                                  double lr_scale = 1.0);

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 0.05;
    double momentum = 0.9;
    double importance_loss_weight = 1.0;
    int relate_epochs = 8;
    double relate_learning_rate = 0.05;
    int relate_pairs_per_bundle = 6;
    int relate_max_bundles = 250; // per epoch
};

struct SampleLossOptions {
    std::vector<int> restrict_outputs;  // empty = all concepts
    double importance_weight = 1.0;     // 0 disables the importance term
    std::vector<int> forced_active;
    std::vector<int> probe_positive;    // importance probes with target 1
    const ActivationSchedule* schedule = nullptr;
};

// Classification BCE over the selected concept outputs plus the weighted
// importance BCE over every candidate scored during expansion (target:
// candidate is a ground-truth label). Returns the scalar loss node.
Value sample_loss(Tape& tape, System& system, const FeatureBundle& bundle,
                  const SampleLossOptions& options);

struct TrainReport {
    std::vector<double> epoch_losses;
    std::vector<double> relate_epoch_losses;
};

// End-to-end training of propagation, importance, context, biases and the
// classifier on the base split.
TrainReport train_base(System& system, const std::vector<FeatureBundle>& train,
                       const TrainConfig& cfg, std::uint64_t seed, int start_epoch = 0,
                       SgdOptimizer* optimizer = nullptr);

// Link-prediction episodes over partial graphs: positives are ground-truth
// edges whose endpoints co-occur in a bundle's expansion; negatives sample
// valid non-edges 1:1.
TrainReport train_relate(System& system, const std::vector<FeatureBundle>& train,
                         const TrainConfig& cfg, std::uint64_t seed);

// Training checkpoint: epoch counter, parameters and optimizer state.
void save_checkpoint(const std::string& path, int next_epoch, const ParameterStore& store,
                     const SgdOptimizer& optimizer, std::uint64_t config_hash, std::uint64_t seed);
int load_checkpoint(const std::string& path, ParameterStore& store, SgdOptimizer& optimizer);

} // namespace nscr

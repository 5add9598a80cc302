#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "playtitle/model.hpp"

namespace playtitle {

enum class WeightDecayMode { decoupled, coupled };
enum class ScheduleUnit { epoch, step };

struct TrainConfig {
    double lr_max = 0.005;
    double weight_decay = 1e-4;
    double lr_min = 1e-6;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    WeightDecayMode decay_mode = WeightDecayMode::decoupled;
    ScheduleUnit schedule_unit = ScheduleUnit::epoch;
    unsigned threads = 1;

    void validate() const;
};

// Cosine annealing from lr_max at 0 to lr_min at max_epochs. `epoch` may be
// fractional when the schedule is stepped per batch.
double lr_at(double epoch, const TrainConfig& cfg);

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::uint64_t step = 0;
};

AdamState make_adam_state(const ParamStore& params);

// One bias-corrected Adam update. Weight decay applies only to parameters
// flagged `decay`. Throws NumericError on a non-finite gradient.
void adam_step(ParamStore& params, const GradStore& grads, AdamState& state, double lr,
               const TrainConfig& cfg);

class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    // Returns true when `val_nll` is a strict improvement.
    bool update(double val_nll);
    bool should_stop() const { return epochs_since_best_ >= patience_; }
    double best() const { return best_; }
    std::size_t epochs_since_best() const { return epochs_since_best_; }

private:
    std::size_t patience_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t epochs_since_best_ = 0;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;
    double train_nll = 0.0;
    double val_nll = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    ParamStore best;
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_val_nll = std::numeric_limits<double>::infinity();
    bool early_stopped = false;
    bool diverged = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(const ModelConfig& model_cfg, ParamStore params,
                  std::span<const EncodedExample> train_set, std::span<const EncodedExample> val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Mean NLL per target token, evaluation mode.
double mean_nll(const ParamStore& params, const ModelConfig& cfg,
                std::span<const EncodedExample> examples, std::size_t batch_size = 64,
                unsigned threads = 1);

// CSV "epoch,lr,train_nll,val_nll,seconds".
std::string format_train_log(std::span<const EpochLog> log);

}  // namespace playtitle

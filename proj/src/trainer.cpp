#include "playtitle/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "playtitle/error.hpp"
#include "playtitle/rng.hpp"

namespace playtitle {

void TrainConfig::validate() const {
    if (!(lr_min < lr_max) || lr_min < 0.0) throw InvalidArgument("need 0 <= lr_min < lr_max");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (max_epochs < 1) throw InvalidArgument("max_epochs must be >= 1");
    if (weight_decay < 0.0) throw InvalidArgument("weight_decay must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw InvalidArgument("Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw InvalidArgument("adam_eps must be > 0");
}

double lr_at(double epoch, const TrainConfig& cfg) {
    if (epoch < 0.0 || epoch > static_cast<double>(cfg.max_epochs)) {
        throw InvalidArgument("epoch outside [0, max_epochs]");
    }
    if (epoch == 0.0) return cfg.lr_max;
    if (epoch == static_cast<double>(cfg.max_epochs)) return cfg.lr_min;
    const double progress = epoch / static_cast<double>(cfg.max_epochs);
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamState make_adam_state(const ParamStore& params) {
    AdamState s;
    s.m = zero_grads(params);
    s.v = zero_grads(params);
    return s;
}

void adam_step(ParamStore& params, const GradStore& grads, AdamState& state, double lr, const TrainConfig& cfg) {
    if (grads.size() != params.params.size() || state.m.size() != grads.size()) {
        throw InvalidArgument("adam_step: gradient/parameter count mismatch");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].same_shape(params.params[i].value)) {
            throw InvalidArgument("adam_step: shape mismatch for " + params.params[i].name);
        }
        for (double g : grads[i].data) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + params.params[i].name);
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        Parameter& p = params.params[i];
        const bool decay = p.decay && cfg.weight_decay > 0.0;
        double* theta = p.value.data.data();
        double* m = state.m[i].data.data();
        double* v = state.v[i].data.data();
        const double* g = grads[i].data.data();
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            double gj = g[j];
            if (decay && cfg.decay_mode == WeightDecayMode::coupled) gj += cfg.weight_decay * theta[j];
            m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * gj;
            v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * gj * gj;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            double updated = theta[j] - lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
            if (decay && cfg.decay_mode == WeightDecayMode::decoupled) updated -= lr * cfg.weight_decay * theta[j];
            theta[j] = updated;
        }
    }
}

bool EarlyStopping::update(double val_nll) {
    if (val_nll < best_) {
        best_ = val_nll;
        epochs_since_best_ = 0;
        return true;
    }
    ++epochs_since_best_;
    return false;
}

double mean_nll(const ParamStore& params, const ModelConfig& cfg, std::span<const EncodedExample> examples,
                std::size_t batch_size, unsigned threads) {
    if (examples.empty()) throw InvalidArgument("mean_nll over no examples");
    double nll = 0.0;
    std::size_t tokens = 0;
    for (std::size_t b = 0; b < examples.size(); b += batch_size) {
        const auto chunk = examples.subspan(b, std::min(batch_size, examples.size() - b));
        const LossResult r = loss(params, cfg, make_batch(chunk), nullptr, {false, 0, threads});
        nll += r.nll_sum;
        tokens += r.tokens;
    }
    return nll / static_cast<double>(tokens);
}

TrainResult train(const ModelConfig& model_cfg, ParamStore params, std::span<const EncodedExample> train_set,
                  std::span<const EncodedExample> val_set, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    model_cfg.validate();
    if (train_set.empty() || val_set.empty()) throw InvalidArgument("train and validation sets must be non-empty");

    TrainResult result;
    result.best = params;
    AdamState adam = make_adam_state(params);
    EarlyStopping stopper(cfg.patience);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t steps_per_epoch = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<EncodedExample> batch_examples;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        Rng shuffle_rng(mix_seed(cfg.seed, epoch));
        shuffle_rng.shuffle(std::span<std::size_t>(order));

        double nll_sum = 0.0;
        std::size_t tokens = 0;
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const std::size_t begin = s * cfg.batch_size;
            const std::size_t end = std::min(train_set.size(), begin + cfg.batch_size);
            batch_examples.clear();
            for (std::size_t i = begin; i < end; ++i) batch_examples.push_back(train_set[order[i]]);
            const double progress = cfg.schedule_unit == ScheduleUnit::epoch
                                        ? static_cast<double>(epoch)
                                        : static_cast<double>(epoch) +
                                              static_cast<double>(s) / static_cast<double>(steps_per_epoch);
            const double lr = lr_at(progress, cfg);
            GradStore grads = zero_grads(params);
            try {
                const std::uint64_t dropout_seed = mix_seed(cfg.seed ^ 0x5eedULL, adam.step);
                const LossResult r =
                    loss(params, model_cfg, make_batch(batch_examples), &grads, {true, dropout_seed, cfg.threads});
                adam_step(params, grads, adam, lr, cfg);
                nll_sum += r.nll_sum;
                tokens += r.tokens;
            } catch (const NumericError&) {
                result.diverged = true;
                return result;
            }
        }

        EpochLog entry;
        entry.epoch = epoch + 1;
        entry.lr = lr_at(static_cast<double>(epoch), cfg);
        entry.train_nll = nll_sum / static_cast<double>(tokens);
        try {
            entry.val_nll = mean_nll(params, model_cfg, val_set, cfg.batch_size, cfg.threads);
        } catch (const NumericError&) {
            result.diverged = true;
            return result;
        }
        entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);

        if (stopper.update(entry.val_nll)) {
            result.best = params;
            result.best_epoch = entry.epoch;
            result.best_val_nll = entry.val_nll;
        }
        if (stopper.should_stop()) {
            result.early_stopped = true;
            break;
        }
    }
    return result;
}

std::string format_train_log(std::span<const EpochLog> log) {
    std::string out = "epoch,lr,train_nll,val_nll,seconds\n";
    char buf[160];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.lr, e.train_nll, e.val_nll, e.seconds);
        out += buf;
    }
    return out;
}

}  // namespace playtitle

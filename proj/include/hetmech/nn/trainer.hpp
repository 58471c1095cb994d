#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetmech/common/error.hpp"
#include "hetmech/common/io.hpp"
#include "hetmech/common/rng.hpp"
#include "hetmech/dataset/forge.hpp"
#include "hetmech/metrics/metrics.hpp"
#include "hetmech/nn/checkpoint.hpp"
#include "hetmech/nn/network.hpp"
#include "hetmech/nn/optim.hpp"

namespace hetmech::nn {

struct TrainConfig {
    std::string arch = "desk3";
    int batch_size = 64;
    int epochs = 100;
    double lr = 0.01;
    double lr_after = 0.001;
    int lr_drop_epoch = 50;  // epochs >= this use lr_after
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 2) throw ConfigError("batch_size", "must be >= 2 (batch statistics need two samples)");
        if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
        if (!(lr >= 0.0) || !(lr_after >= 0.0)) throw ConfigError("lr", "learning rates must be >= 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("beta1", "Adam betas must lie in [0, 1)");
        if (!(eps > 0.0)) throw ConfigError("eps", "must be > 0");
        architecture_by_name(arch);
    }

    nlohmann::json to_json() const {
        return {{"arch", arch},     {"batch_size", batch_size}, {"epochs", epochs}, {"lr", lr},
                {"lr_after", lr_after}, {"lr_drop_epoch", lr_drop_epoch}, {"beta1", beta1}, {"beta2", beta2},
                {"eps", eps},       {"seed", seed}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.arch = j.value("arch", c.arch);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.lr = j.value("lr", c.lr);
        c.lr_after = j.value("lr_after", c.lr_after);
        c.lr_drop_epoch = j.value("lr_drop_epoch", c.lr_drop_epoch);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.eps = j.value("eps", c.eps);
        c.seed = j.value("seed", c.seed);
        c.validate();
        return c;
    }
};

struct EpochStats {
    int epoch = 0;
    double train_mse = 0.0;  // mean minibatch loss, normalised labels
    double val_mse = 0.0;    // inference mode, normalised labels; NaN without a validation set
    double lr = 0.0;
};

inline CsvTable history_table(const std::vector<EpochStats>& h) {
    CsvTable t;
    t.header = {"epoch", "train_mse", "val_mse", "lr"};
    for (const auto& e : h)
        t.rows.push_back({std::to_string(e.epoch), format_double(e.train_mse), format_double(e.val_mse), format_double(e.lr)});
    return t;
}

struct TrainResult {
    Checkpoint best;   // lowest validation loss (last epoch without validation)
    Checkpoint last;   // final epoch, with optimiser state
    std::vector<EpochStats> history;
    int best_epoch = 0;
};

inline LabelScaler fit_scaler(const std::vector<double>& y) {
    if (y.empty()) throw ArgumentError("cannot fit a label scaler to an empty set");
    const double n = static_cast<double>(y.size());
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    return {mean, sd > 0.0 ? sd : 1.0};
}

/// Network outputs for `xs` in inference mode, mapped back to label units.
inline std::vector<double> predict(Network& net, const LabelScaler& scaler, const std::vector<Pattern>& xs,
                                   int batch_size = 64) {
    std::vector<double> out;
    out.reserve(xs.size());
    for (std::size_t lo = 0; lo < xs.size(); lo += static_cast<std::size_t>(batch_size)) {
        const std::size_t hi = std::min(xs.size(), lo + static_cast<std::size_t>(batch_size));
        std::vector<const Pattern*> b;
        for (std::size_t i = lo; i < hi; ++i) b.push_back(&xs[i]);
        const auto y = net.forward(patterns_to_tensor(b), false);
        for (Eigen::Index i = 0; i < y.size(); ++i) out.push_back(scaler.inverse(y[i]));
    }
    return out;
}

inline std::vector<double> predict(const Checkpoint& c, const std::vector<Pattern>& xs) {
    Network net(c.arch);
    restore(c, net);
    return predict(net, c.scaler, xs);
}

namespace detail {
inline double normalised_mse(Network& net, const LabelScaler& s, const dataset::LabeledSet& set) {
    const auto pred = predict(net, s, set.x);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = s.forward(pred[i]) - s.forward(set.y[i]);
        acc += e * e;
    }
    return acc / static_cast<double>(pred.size());
}
}  // namespace detail

/// Minibatch Adam on the MSE of z-scored labels. `init` (optional) supplies
/// starting weights; the scaler is always refitted to `train`. The returned
/// `best` checkpoint is the epoch with the lowest validation loss.
inline TrainResult train_model(const TrainConfig& cfg, const dataset::LabeledSet& train,
                               const dataset::LabeledSet* val = nullptr, const Checkpoint* init = nullptr,
                               const std::function<void(const EpochStats&)>& on_epoch = {}) {
    cfg.validate();
    if (train.size() < 2) throw ArgumentError("training needs at least 2 samples");
    const ArchitectureSpec arch = init ? init->arch : architecture_by_name(cfg.arch);
    Network net(arch, mix_seed(cfg.seed, 0x696e6974ULL));
    if (init) restore(*init, net);
    const LabelScaler scaler = fit_scaler(train.y);
    Adam opt(net.parameters(), {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});

    std::set<std::string> seen_ids(train.ids.begin(), train.ids.end());
    if (init && init->provenance.contains("train_ids"))
        for (const auto& id : init->provenance["train_ids"]) seen_ids.insert(id.get<std::string>());
    nlohmann::json prov = {{"train_config", cfg.to_json()},
                           {"n_train", train.size()},
                           {"n_val", val ? val->size() : 0},
                           {"train_ids", std::vector<std::string>(seen_ids.begin(), seen_ids.end())},
                           {"init", init ? init->provenance.value("label", std::string("checkpoint")) : "random"}};

    TrainResult res;
    double best_val = INFINITY;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = epoch < cfg.lr_drop_epoch ? cfg.lr : cfg.lr_after;
        opt.set_lr(lr);
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
        stable_shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += bs) {
            const std::size_t hi = std::min(order.size(), lo + bs);
            if (hi - lo < 2) break;  // a lone sample has no batch statistics
            std::vector<const Pattern*> b;
            Eigen::VectorXd target(static_cast<Eigen::Index>(hi - lo));
            for (std::size_t i = lo; i < hi; ++i) {
                b.push_back(&train.x[order[i]]);
                target[static_cast<Eigen::Index>(i - lo)] = scaler.forward(train.y[order[i]]);
            }
            net.zero_grad();
            const Eigen::VectorXd y = net.forward(patterns_to_tensor(b), true);
            const Eigen::VectorXd err = y - target;
            const double loss = err.squaredNorm() / static_cast<double>(err.size());
            if (!std::isfinite(loss)) throw DivergenceError("loss", "non-finite in epoch " + std::to_string(epoch));
            net.backward(2.0 * err / static_cast<double>(err.size()));
            opt.step();
            loss_sum += loss;
            ++n_batches;
        }
        EpochStats st{epoch, n_batches ? loss_sum / static_cast<double>(n_batches) : NAN, NAN, lr};
        if (val && val->size() > 0) st.val_mse = detail::normalised_mse(net, scaler, *val);
        res.history.push_back(st);
        if (on_epoch) on_epoch(st);
        const bool better = (val && val->size() > 0) ? st.val_mse < best_val : true;
        if (better) {
            best_val = (val && val->size() > 0) ? st.val_mse : best_val;
            res.best = capture(net, scaler);
            res.best_epoch = epoch;
        }
    }
    res.last = capture(net, scaler, &opt);
    prov["best_epoch"] = res.best_epoch;
    res.best.provenance = prov;
    res.last.provenance = prov;
    return res;
}

struct EvalReport {
    metrics::RegressionScore score;
    std::size_t n = 0;
    double rotation_spread = 0.0;  // mean (max - min) prediction over the four rotations, label units
    std::vector<double> y_true, y_pred;
};

/// Scores a checkpoint on a held-out set. Throws LeakageError when any test id
/// was seen during training (recorded in the checkpoint provenance).
inline EvalReport evaluate(const Checkpoint& c, const dataset::LabeledSet& test) {
    if (test.size() == 0) throw ArgumentError("evaluation set is empty");
    if (c.provenance.contains("train_ids")) {
        std::set<std::string> seen;
        for (const auto& id : c.provenance["train_ids"]) seen.insert(id.get<std::string>());
        for (const auto& id : test.ids)
            if (seen.count(id)) throw LeakageError("test pattern " + id + " was used for training");
    }
    Network net(c.arch);
    restore(c, net);
    EvalReport r;
    r.n = test.size();
    r.y_true = test.y;
    r.y_pred = predict(net, c.scaler, test.x);
    r.score = metrics::r2_mae(r.y_true, r.y_pred);
    std::vector<Pattern> rots;
    for (const auto& p : test.x)
        for (int q = 0; q < 4; ++q) rots.push_back(rotate_pattern(p, q));
    const auto pr = predict(net, c.scaler, rots);
    double spread = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto [lo, hi] = std::minmax_element(pr.begin() + 4 * i, pr.begin() + 4 * i + 4);
        spread += *hi - *lo;
    }
    r.rotation_spread = spread / static_cast<double>(test.size());
    return r;
}

}  // namespace hetmech::nn

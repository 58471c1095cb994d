#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "hetmech/common/error.hpp"
#include "hetmech/nn/network.hpp"

namespace hetmech::nn {

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers mirror Network::parameters().
class Adam {
public:
    Adam(std::vector<ParamRef>& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
        for (const auto& p : params) {
            m_.emplace_back(Eigen::VectorXd::Zero(p.size));
            v_.emplace_back(Eigen::VectorXd::Zero(p.size));
        }
    }

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    long step_count() const { return t_; }
    std::vector<Eigen::VectorXd>& first_moments() { return m_; }
    std::vector<Eigen::VectorXd>& second_moments() { return v_; }
    void set_step_count(long t) { t_ = t; }

    /// Throws DivergenceError naming the first parameter with a non-finite gradient.
    void step() {
        for (const auto& p : *params_) {
            const Eigen::Map<const Eigen::VectorXd> g(p.grad, p.size);
            if (!g.allFinite()) throw DivergenceError(p.name, "non-finite gradient");
        }
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_->size(); ++i) {
            auto& p = (*params_)[i];
            Eigen::Map<Eigen::VectorXd> w(p.value, p.size);
            const Eigen::Map<const Eigen::VectorXd> g(p.grad, p.size);
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
            w.array() -= cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
        }
    }

private:
    std::vector<ParamRef>* params_;
    AdamConfig cfg_;
    std::vector<Eigen::VectorXd> m_, v_;
    long t_ = 0;
};

}  // namespace hetmech::nn

#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "hetmech/common/error.hpp"
#include "hetmech/common/rng.hpp"
#include "hetmech/pattern/pattern.hpp"

namespace hetmech::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Batch of feature maps stored channel-major: row = channel, column =
/// (sample * h + y) * w + x. Convolutions then become one GEMM per batch.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    Matrix v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_), v(Matrix::Zero(c_, static_cast<Eigen::Index>(n_) * h_ * w_)) {}
    Eigen::Index plane() const { return static_cast<Eigen::Index>(h) * w; }
};

enum class Padding { same, valid };

struct ConvSpec {
    int out_channels = 8;
    int kernel = 3;
    Padding padding = Padding::same;
    bool batchnorm = true;
    bool relu = true;
    bool maxpool = false;
};

/// Convolution stack followed by an affine map of the flattened final maps to
/// one scalar.
struct ArchitectureSpec {
    std::string name = "custom";
    int input_size = kPatternSide;
    int in_channels = 1;
    std::vector<ConvSpec> conv;

    /// Spatial size after each conv layer (after pooling if any).
    std::vector<int> spatial_sizes() const {
        std::vector<int> out;
        int s = input_size;
        for (const auto& c : conv) {
            if (c.padding == Padding::valid) s = s - c.kernel + 1;
            if (c.maxpool) s /= 2;
            out.push_back(s);
        }
        return out;
    }

    void validate() const {
        if (conv.empty()) throw ArchitectureError("at least one conv layer is required");
        if (input_size <= 0 || in_channels <= 0) throw ArchitectureError("input shape must be positive");
        int s = input_size;
        for (std::size_t i = 0; i < conv.size(); ++i) {
            const auto& c = conv[i];
            const std::string at = "conv" + std::to_string(i);
            if (c.out_channels <= 0 || c.kernel <= 0) throw ArchitectureError(at + ": channels and kernel must be > 0");
            if (c.padding == Padding::same && c.kernel % 2 == 0)
                throw ArchitectureError(at + ": same padding needs an odd kernel");
            if (c.padding == Padding::valid) s = s - c.kernel + 1;
            if (s <= 0) throw ArchitectureError(at + ": spatial size drops to " + std::to_string(s));
            if (c.maxpool) {
                if (c.padding != Padding::same) throw ArchitectureError(at + ": pooling only follows same-padded layers");
                if (s % 2 != 0) throw ArchitectureError(at + ": pooling needs an even spatial size");
                s /= 2;
            }
        }
        const auto& last = conv.back();
        if (last.batchnorm || last.relu) throw ArchitectureError("the last conv layer takes no batchnorm or activation");
    }

    nlohmann::json to_json() const {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& c : conv)
            layers.push_back({{"out_channels", c.out_channels},
                              {"kernel", c.kernel},
                              {"padding", c.padding == Padding::same ? "same" : "valid"},
                              {"batchnorm", c.batchnorm},
                              {"relu", c.relu},
                              {"maxpool", c.maxpool}});
        return {{"name", name}, {"input_size", input_size}, {"in_channels", in_channels}, {"conv", layers}};
    }

    static ArchitectureSpec from_json(const nlohmann::json& j) {
        ArchitectureSpec a;
        try {
            a.name = j.at("name").get<std::string>();
            a.input_size = j.at("input_size").get<int>();
            a.in_channels = j.at("in_channels").get<int>();
            for (const auto& l : j.at("conv")) {
                ConvSpec c;
                c.out_channels = l.at("out_channels").get<int>();
                c.kernel = l.at("kernel").get<int>();
                const auto pad = l.at("padding").get<std::string>();
                if (pad != "same" && pad != "valid") throw ArchitectureError("unknown padding '" + pad + "'");
                c.padding = pad == "same" ? Padding::same : Padding::valid;
                c.batchnorm = l.at("batchnorm").get<bool>();
                c.relu = l.at("relu").get<bool>();
                c.maxpool = l.at("maxpool").get<bool>();
                a.conv.push_back(c);
            }
        } catch (const nlohmann::json::exception& e) {
            throw ArchitectureError(std::string("malformed architecture: ") + e.what());
        }
        a.validate();
        return a;
    }

    bool operator==(const ArchitectureSpec& o) const { return to_json() == o.to_json(); }
};

namespace detail {
inline ArchitectureSpec nine_layer(std::string name, int c1, int c2, int c3, int mid, int k1) {
    ArchitectureSpec a;
    a.name = std::move(name);
    a.conv = {{c1, 3, Padding::same, true, true, true},    {c2, 3, Padding::same, true, true, true},
              {c3, 3, Padding::same, true, true, true},    {mid, 3, Padding::valid, true, true, false},
              {mid, 3, Padding::valid, true, true, false}, {mid, 3, Padding::valid, true, true, false},
              {mid, 2, Padding::valid, true, true, false}, {k1, 1, Padding::valid, true, true, false},
              {1, 1, Padding::valid, false, false, false}};
    return a;
}
}  // namespace detail

/// Nine conv layers: three same-padded layers each followed by 2x2 pooling
/// (64 -> 8), then valid layers down to a 1x1 map.
inline ArchitectureSpec paper9_architecture() { return detail::nine_layer("paper9", 64, 128, 256, 352, 256); }

/// Same motif with narrow channels, for desk-scale training.
inline ArchitectureSpec desk3_architecture() { return detail::nine_layer("desk3", 8, 16, 32, 32, 16); }

inline ArchitectureSpec architecture_by_name(const std::string& name) {
    if (name == "desk3") return desk3_architecture();
    if (name == "paper9") return paper9_architecture();
    throw ConfigError("arch", "unknown architecture preset '" + name + "' (expected desk3 or paper9)");
}

/// A named parameter or buffer living inside a layer.
struct ParamRef {
    std::string name;
    std::vector<int> shape;
    double* value = nullptr;
    double* grad = nullptr;  // null for buffers
    Eigen::Index size = 0;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, bool train) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;
    virtual void collect(std::vector<ParamRef>&, std::vector<ParamRef>&) {}
    virtual void zero_grad() {}
};

class Conv2d : public Layer {
public:
    Conv2d(std::string name, int in_c, int out_c, int k, Padding pad)
        : name_(std::move(name)), in_c_(in_c), out_c_(out_c), k_(k), pad_(pad == Padding::same ? k / 2 : 0),
          weight_(Matrix::Zero(out_c, in_c * k * k)), bias_(Eigen::VectorXd::Zero(out_c)),
          dweight_(Matrix::Zero(out_c, in_c * k * k)), dbias_(Eigen::VectorXd::Zero(out_c)) {}

    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_c_ * k_ * k_));
        for (Eigen::Index i = 0; i < weight_.size(); ++i) weight_.data()[i] = uniform(rng, -bound, bound);
        for (Eigen::Index i = 0; i < bias_.size(); ++i) bias_[i] = uniform(rng, -bound, bound);
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.c != in_c_) throw ArchitectureError(name_ + ": expected " + std::to_string(in_c_) + " channels, got " + std::to_string(x.c));
        in_shape_ = {x.n, x.c, x.h, x.w};
        const int ho = x.h + 2 * pad_ - k_ + 1, wo = x.w + 2 * pad_ - k_ + 1;
        const Eigen::Index cols = static_cast<Eigen::Index>(x.n) * ho * wo;
        col_.resize(static_cast<Eigen::Index>(in_c_) * k_ * k_, cols);
        for (int ci = 0; ci < in_c_; ++ci)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    double* dst = col_.row((ci * k_ + ky) * k_ + kx).data();
                    const double* src = x.v.row(ci).data();
                    for (int s = 0; s < x.n; ++s)
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy + ky - pad_;
                            double* d = dst + (static_cast<Eigen::Index>(s) * ho + oy) * wo;
                            if (iy < 0 || iy >= x.h) {
                                std::fill(d, d + wo, 0.0);
                                continue;
                            }
                            const double* srow = src + (static_cast<Eigen::Index>(s) * x.h + iy) * x.w;
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox + kx - pad_;
                                d[ox] = (ix < 0 || ix >= x.w) ? 0.0 : srow[ix];
                            }
                        }
                }
        Tensor y(x.n, out_c_, ho, wo);
        y.v.noalias() = weight_ * col_;
        y.v.colwise() += bias_;
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        dweight_.noalias() += dy.v * col_.transpose();
        dbias_ += dy.v.rowwise().sum();
        const Matrix dcol = weight_.transpose() * dy.v;
        Tensor dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
        const int ho = dy.h, wo = dy.w;
        for (int ci = 0; ci < in_c_; ++ci)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    const double* src = dcol.row((ci * k_ + ky) * k_ + kx).data();
                    double* dst = dx.v.row(ci).data();
                    for (int s = 0; s < dx.n; ++s)
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy + ky - pad_;
                            if (iy < 0 || iy >= dx.h) continue;
                            const double* srow = src + (static_cast<Eigen::Index>(s) * ho + oy) * wo;
                            double* drow = dst + (static_cast<Eigen::Index>(s) * dx.h + iy) * dx.w;
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox + kx - pad_;
                                if (ix >= 0 && ix < dx.w) drow[ix] += srow[ox];
                            }
                        }
                }
        return dx;
    }

    void collect(std::vector<ParamRef>& params, std::vector<ParamRef>&) override {
        params.push_back({name_ + ".weight", {out_c_, in_c_, k_, k_}, weight_.data(), dweight_.data(), weight_.size()});
        params.push_back({name_ + ".bias", {out_c_}, bias_.data(), dbias_.data(), bias_.size()});
    }
    void zero_grad() override {
        dweight_.setZero();
        dbias_.setZero();
    }

private:
    std::string name_;
    int in_c_, out_c_, k_, pad_;
    Matrix weight_;
    Eigen::VectorXd bias_;
    Matrix dweight_;
    Eigen::VectorXd dbias_;
    Matrix col_;
    std::array<int, 4> in_shape_{};
};

class BatchNorm : public Layer {
public:
    BatchNorm(std::string name, int c, double momentum = 0.1, double eps = 1e-5)
        : name_(std::move(name)), c_(c), momentum_(momentum), eps_(eps), gamma_(Eigen::VectorXd::Ones(c)),
          beta_(Eigen::VectorXd::Zero(c)), running_mean_(Eigen::VectorXd::Zero(c)),
          running_var_(Eigen::VectorXd::Ones(c)), dgamma_(Eigen::VectorXd::Zero(c)), dbeta_(Eigen::VectorXd::Zero(c)) {}

    Tensor forward(const Tensor& x, bool train) override {
        Tensor y(x.n, x.c, x.h, x.w);
        const double m = static_cast<double>(x.v.cols());
        if (train) {
            xhat_.resize(x.v.rows(), x.v.cols());
            inv_std_.resize(c_);
            for (int ch = 0; ch < c_; ++ch) {
                const auto row = x.v.row(ch);
                const double mean = row.mean();
                const double var = (row.array() - mean).square().sum() / m;
                inv_std_[ch] = 1.0 / std::sqrt(var + eps_);
                xhat_.row(ch) = (row.array() - mean) * inv_std_[ch];
                running_mean_[ch] = (1 - momentum_) * running_mean_[ch] + momentum_ * mean;
                const double unbiased = m > 1 ? var * m / (m - 1) : var;
                running_var_[ch] = (1 - momentum_) * running_var_[ch] + momentum_ * unbiased;
                y.v.row(ch) = gamma_[ch] * xhat_.row(ch).array() + beta_[ch];
            }
        } else {
            for (int ch = 0; ch < c_; ++ch) {
                const double s = gamma_[ch] / std::sqrt(running_var_[ch] + eps_);
                y.v.row(ch) = (x.v.row(ch).array() - running_mean_[ch]) * s + beta_[ch];
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        Tensor dx(dy.n, dy.c, dy.h, dy.w);
        const double m = static_cast<double>(dy.v.cols());
        for (int ch = 0; ch < c_; ++ch) {
            const auto g = dy.v.row(ch).array();
            const auto xh = xhat_.row(ch).array();
            const double sum_g = g.sum();
            const double sum_gx = (g * xh).sum();
            dgamma_[ch] += sum_gx;
            dbeta_[ch] += sum_g;
            dx.v.row(ch) = (gamma_[ch] * inv_std_[ch] / m) * (m * g - sum_g - xh * sum_gx);
        }
        return dx;
    }

    void collect(std::vector<ParamRef>& params, std::vector<ParamRef>& buffers) override {
        params.push_back({name_ + ".gamma", {c_}, gamma_.data(), dgamma_.data(), c_});
        params.push_back({name_ + ".beta", {c_}, beta_.data(), dbeta_.data(), c_});
        buffers.push_back({name_ + ".running_mean", {c_}, running_mean_.data(), nullptr, c_});
        buffers.push_back({name_ + ".running_var", {c_}, running_var_.data(), nullptr, c_});
    }
    void zero_grad() override {
        dgamma_.setZero();
        dbeta_.setZero();
    }

private:
    std::string name_;
    int c_;
    double momentum_, eps_;
    Eigen::VectorXd gamma_, beta_, running_mean_, running_var_, dgamma_, dbeta_;
    Matrix xhat_;
    Eigen::VectorXd inv_std_;
};

/// max(x, 0); the subgradient at 0 is taken as 0.
class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        Tensor y = x;
        y.v = x.v.cwiseMax(0.0);
        mask_ = (x.v.array() > 0.0).cast<double>();
        return y;
    }
    Tensor backward(const Tensor& dy) override {
        Tensor dx = dy;
        dx.v = dy.v.cwiseProduct(mask_);
        return dx;
    }

private:
    Matrix mask_;
};

/// 2x2 max pooling, stride 2; ties go to the first element in row-major order.
class MaxPool2 : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        in_shape_ = {x.n, x.c, x.h, x.w};
        Tensor y(x.n, x.c, x.h / 2, x.w / 2);
        argmax_.resize(static_cast<std::size_t>(y.v.size()));
        for (int ch = 0; ch < x.c; ++ch) {
            const double* src = x.v.row(ch).data();
            double* dst = y.v.row(ch).data();
            for (int s = 0; s < x.n; ++s)
                for (int oy = 0; oy < y.h; ++oy)
                    for (int ox = 0; ox < y.w; ++ox) {
                        const Eigen::Index base = (static_cast<Eigen::Index>(s) * x.h + 2 * oy) * x.w + 2 * ox;
                        Eigen::Index best = base;
                        for (Eigen::Index off : {base + 1, base + x.w, base + x.w + 1})
                            if (src[off] > src[best]) best = off;
                        const Eigen::Index o = (static_cast<Eigen::Index>(s) * y.h + oy) * y.w + ox;
                        dst[o] = src[best];
                        argmax_[static_cast<std::size_t>(ch) * y.v.cols() + o] = best;
                    }
        }
        return y;
    }
    Tensor backward(const Tensor& dy) override {
        Tensor dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
        for (int ch = 0; ch < dy.c; ++ch) {
            const double* src = dy.v.row(ch).data();
            double* dst = dx.v.row(ch).data();
            for (Eigen::Index o = 0; o < dy.v.cols(); ++o)
                dst[argmax_[static_cast<std::size_t>(ch) * dy.v.cols() + o]] += src[o];
        }
        return dx;
    }

private:
    std::array<int, 4> in_shape_{};
    std::vector<Eigen::Index> argmax_;
};

/// Affine map of the flattened (c, h, w) features of each sample to a scalar.
class Head {
public:
    explicit Head(int features) : weight_(Eigen::VectorXd::Zero(features)), dweight_(Eigen::VectorXd::Zero(features)) {}

    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(weight_.size()));
        for (Eigen::Index i = 0; i < weight_.size(); ++i) weight_[i] = uniform(rng, -bound, bound);
        bias_ = uniform(rng, -bound, bound);
    }

    Eigen::VectorXd forward(const Tensor& x) {
        x_ = x;
        Eigen::VectorXd y(x.n);
        const Eigen::Index hw = x.plane();
        for (int s = 0; s < x.n; ++s) {
            double acc = bias_;
            for (int ch = 0; ch < x.c; ++ch)
                acc += x.v.row(ch).segment(s * hw, hw).dot(weight_.segment(ch * hw, hw));
            y[s] = acc;
        }
        return y;
    }

    Tensor backward(const Eigen::VectorXd& dy) {
        Tensor dx(x_.n, x_.c, x_.h, x_.w);
        const Eigen::Index hw = x_.plane();
        for (int s = 0; s < x_.n; ++s) {
            dbias_ += dy[s];
            for (int ch = 0; ch < x_.c; ++ch) {
                dweight_.segment(ch * hw, hw) += dy[s] * x_.v.row(ch).segment(s * hw, hw).transpose();
                dx.v.row(ch).segment(s * hw, hw) = dy[s] * weight_.segment(ch * hw, hw).transpose();
            }
        }
        return dx;
    }

    void collect(std::vector<ParamRef>& params) {
        params.push_back({"head.weight", {static_cast<int>(weight_.size())}, weight_.data(), dweight_.data(), weight_.size()});
        params.push_back({"head.bias", {1}, &bias_, &dbias_, 1});
    }
    void zero_grad() {
        dweight_.setZero();
        dbias_ = 0.0;
    }

private:
    Eigen::VectorXd weight_;
    double bias_ = 0.0;
    Eigen::VectorXd dweight_;
    double dbias_ = 0.0;
    Tensor x_;
};

/// The surrogate network built from an ArchitectureSpec.
class Network {
public:
    explicit Network(ArchitectureSpec arch, std::uint64_t seed = 0) : arch_(std::move(arch)) {
        arch_.validate();
        Rng rng(seed);
        int in_c = arch_.in_channels;
        for (std::size_t i = 0; i < arch_.conv.size(); ++i) {
            const auto& c = arch_.conv[i];
            auto conv = std::make_unique<Conv2d>("conv" + std::to_string(i), in_c, c.out_channels, c.kernel, c.padding);
            conv->init(rng);
            layers_.push_back(std::move(conv));
            if (c.batchnorm) layers_.push_back(std::make_unique<BatchNorm>("bn" + std::to_string(i), c.out_channels));
            if (c.relu) layers_.push_back(std::make_unique<ReLU>());
            if (c.maxpool) layers_.push_back(std::make_unique<MaxPool2>());
            in_c = c.out_channels;
        }
        const int s = arch_.spatial_sizes().back();
        head_ = std::make_unique<Head>(in_c * s * s);
        head_->init(rng);
        for (auto& l : layers_) l->collect(params_, buffers_);
        head_->collect(params_);
    }

    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    const ArchitectureSpec& architecture() const { return arch_; }
    std::vector<ParamRef>& parameters() { return params_; }
    std::vector<ParamRef>& buffers() { return buffers_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += static_cast<std::size_t>(p.size);
        return n;
    }

    Eigen::VectorXd forward(const Tensor& x, bool train) {
        if (x.c != arch_.in_channels || x.h != arch_.input_size || x.w != arch_.input_size)
            throw ArchitectureError("input is " + std::to_string(x.c) + "x" + std::to_string(x.h) + "x" +
                                    std::to_string(x.w) + ", network expects " + std::to_string(arch_.in_channels) +
                                    "x" + std::to_string(arch_.input_size) + "x" + std::to_string(arch_.input_size));
        Tensor cur = x;
        for (auto& l : layers_) cur = l->forward(cur, train);
        return head_->forward(cur);
    }

    /// Accumulates parameter gradients for d(loss)/d(output) = dy.
    void backward(const Eigen::VectorXd& dy) {
        Tensor g = head_->backward(dy);
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    }

    void zero_grad() {
        for (auto& l : layers_) l->zero_grad();
        head_->zero_grad();
    }

private:
    ArchitectureSpec arch_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::unique_ptr<Head> head_;
    std::vector<ParamRef> params_, buffers_;
};

/// Stacks 64x64 patterns into a single-channel batch (cell values 0/1).
inline Tensor patterns_to_tensor(const std::vector<const Pattern*>& batch) {
    Tensor t(static_cast<int>(batch.size()), 1, kPatternSide, kPatternSide);
    for (std::size_t s = 0; s < batch.size(); ++s)
        for (int k = 0; k < kPatternCells; ++k)
            t.v(0, static_cast<Eigen::Index>(s) * kPatternCells + k) = batch[s]->cells[k];
    return t;
}

}  // namespace hetmech::nn

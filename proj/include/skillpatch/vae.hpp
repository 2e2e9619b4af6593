#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "skillpatch/io.hpp"
#include "skillpatch/world.hpp"

namespace skillpatch::vae {

constexpr int kInput = 256;
constexpr int kHidden = 64;
constexpr int kLatent = 5;

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Dense encoder 256 -> 64 (tanh) -> {mu, log-variance} (5 each); decoder 5 -> 64 (tanh) -> 256 (linear).
/// The same struct doubles as the gradient container.
struct VaeParams {
    Mat W1 = Mat::Zero(kHidden, kInput);
    Vec b1 = Vec::Zero(kHidden);
    Mat Wmu = Mat::Zero(kLatent, kHidden);
    Vec bmu = Vec::Zero(kLatent);
    Mat Wlv = Mat::Zero(kLatent, kHidden);
    Vec blv = Vec::Zero(kLatent);
    Mat W2 = Mat::Zero(kHidden, kLatent);
    Vec b2 = Vec::Zero(kHidden);
    Mat W3 = Mat::Zero(kInput, kHidden);
    Vec b3 = Vec::Zero(kInput);
    double noise_sigma{0.001};

    static VaeParams zeros() { return {}; }
    /// Xavier-uniform weights, zero biases.
    static VaeParams random(std::uint64_t seed);

    std::size_t size() const;
    Vec flatten() const;
    void unflatten(const Vec& v);
    bool operator==(const VaeParams& other) const { return flatten() == other.flatten(); }
};

Vec raster_input(const world::Raster& r);

struct Encoding {
    Vec mu;
    Vec sigma;  // variance, exp of the log-variance head
};

Encoding encode(const VaeParams& vae, const Vec& x);
Encoding encode(const VaeParams& vae, const world::Raster& r);
Vec reparameterize(const Vec& mu, const Vec& sigma, const Vec& eps);
Vec decode(const VaeParams& vae, const Vec& z);

/// MSE reconstruction of `x` through the sampled latent plus kl_weight * KL.
/// `input_noise` is added to the encoder input (training-time noise layer); empty means none.
double loss(const VaeParams& vae, const Vec& x, const Vec& eps, const Vec& input_noise = {}, double kl_weight = 0.0);

/// Analytic gradient of `loss` with respect to every parameter.
VaeParams backprop(const VaeParams& vae, const Vec& x, const Vec& eps, const Vec& input_noise = {},
                   double kl_weight = 0.0);

using GradientFn = std::function<VaeParams(const VaeParams&, const Vec&, const Vec&)>;

/// Max relative error between `grad` (default: backprop) and central differences
/// (h = 1e-5) over a seeded subset of `count` parameters.
double gradient_check(const VaeParams& vae, const Vec& x, const Vec& eps, std::uint64_t seed, int count = 100,
                      const GradientFn& grad = {}, double kl_weight = 0.0);

struct TrainSpec {
    double learning_rate{0.2};
    int epochs{8};
    int batch_size{32};
    int augmentation{50};
    double kl_weight{0.0};
};

struct TrainReport {
    std::vector<double> epoch_loss;  // deterministic training loss after each accepted epoch
    double final_learning_rate{0.0};
};

/// 50 variants per raster (the first is the raster itself): quarter-turn rotation,
/// one-cell shear, intensity jitter and additive noise, clamped to [0, 1].
std::vector<Vec> augment(const std::vector<world::Raster>& rasters, int factor, std::uint64_t seed);

/// Mean reconstruction MSE through mu (no sampling, no input noise).
double reconstruction_mse(const VaeParams& vae, const std::vector<Vec>& data);

/// Minibatch gradient descent with a fixed step; an epoch that raises the
/// deterministic loss is undone and the step halved.
VaeParams train(const VaeParams& init, const std::vector<world::Raster>& rasters, const TrainSpec& spec,
                std::uint64_t seed, TrainReport* report = nullptr);

Json to_json(const VaeParams& vae);
VaeParams vae_from_json(const Json& j);

}  // namespace skillpatch::vae

#include "skillpatch/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "skillpatch/common.hpp"

namespace skillpatch::vae {

namespace {

struct Batch {
    Mat x;      // targets, kInput x B
    Mat input;  // targets plus noise
    Mat eps;    // kLatent x B
};

struct Forward {
    Mat h1, mu, lv, s, z, h2, out;
};

Forward forward(const VaeParams& p, const Batch& b)
{
    Forward f;
    f.h1 = ((p.W1 * b.input).colwise() + p.b1).array().tanh();
    f.mu = (p.Wmu * f.h1).colwise() + p.bmu;
    f.lv = (p.Wlv * f.h1).colwise() + p.blv;
    f.s = (0.5 * f.lv.array()).exp();
    f.z = f.mu.array() + b.eps.array() * f.s.array();
    f.h2 = ((p.W2 * f.z).colwise() + p.b2).array().tanh();
    f.out = (p.W3 * f.h2).colwise() + p.b3;
    return f;
}

double batch_loss(const Forward& f, const Batch& b, double kl_weight)
{
    const double B = static_cast<double>(b.x.cols());
    double total = (f.out - b.x).squaredNorm() / kInput;
    if (kl_weight != 0.0) {
        total += kl_weight * 0.5 * (f.lv.array().exp() + f.mu.array().square() - 1.0 - f.lv.array()).sum();
    }
    return total / B;
}

VaeParams batch_gradient(const VaeParams& p, const Batch& b, const Forward& f, double kl_weight)
{
    const double B = static_cast<double>(b.x.cols());
    VaeParams g;
    g.noise_sigma = p.noise_sigma;
    const Mat d_out = 2.0 * (f.out - b.x) / (kInput * B);
    g.W3 = d_out * f.h2.transpose();
    g.b3 = d_out.rowwise().sum();
    const Mat d_a2 = (p.W3.transpose() * d_out).array() * (1.0 - f.h2.array().square());
    g.W2 = d_a2 * f.z.transpose();
    g.b2 = d_a2.rowwise().sum();
    const Mat d_z = p.W2.transpose() * d_a2;
    Mat d_mu = d_z;
    Mat d_lv = 0.5 * d_z.array() * b.eps.array() * f.s.array();
    if (kl_weight != 0.0) {
        d_mu += kl_weight * f.mu / B;
        d_lv.array() += kl_weight * 0.5 * (f.lv.array().exp() - 1.0) / B;
    }
    g.Wmu = d_mu * f.h1.transpose();
    g.bmu = d_mu.rowwise().sum();
    g.Wlv = d_lv * f.h1.transpose();
    g.blv = d_lv.rowwise().sum();
    const Mat d_a1 = (p.Wmu.transpose() * d_mu + p.Wlv.transpose() * d_lv).array() * (1.0 - f.h1.array().square());
    g.W1 = d_a1 * b.input.transpose();
    g.b1 = d_a1.rowwise().sum();
    return g;
}

Batch single(const Vec& x, const Vec& eps, const Vec& noise)
{
    Batch b;
    b.x = x;
    b.input = noise.size() == 0 ? x : Vec(x + noise);
    b.eps = eps;
    return b;
}

template <typename F>
void for_each_block(VaeParams& p, F&& f)
{
    f(p.W1.data(), p.W1.size());
    f(p.b1.data(), p.b1.size());
    f(p.Wmu.data(), p.Wmu.size());
    f(p.bmu.data(), p.bmu.size());
    f(p.Wlv.data(), p.Wlv.size());
    f(p.blv.data(), p.blv.size());
    f(p.W2.data(), p.W2.size());
    f(p.b2.data(), p.b2.size());
    f(p.W3.data(), p.W3.size());
    f(p.b3.data(), p.b3.size());
}

void axpy(VaeParams& p, double a, const VaeParams& g)
{
    p.W1 += a * g.W1;
    p.b1 += a * g.b1;
    p.Wmu += a * g.Wmu;
    p.bmu += a * g.bmu;
    p.Wlv += a * g.Wlv;
    p.blv += a * g.blv;
    p.W2 += a * g.W2;
    p.b2 += a * g.b2;
    p.W3 += a * g.W3;
    p.b3 += a * g.b3;
}

Mat columns(const std::vector<Vec>& data, const std::vector<std::size_t>& idx, std::size_t from, std::size_t to)
{
    Mat m(kInput, static_cast<Eigen::Index>(to - from));
    for (std::size_t k = from; k < to; ++k) m.col(static_cast<Eigen::Index>(k - from)) = data[idx[k]];
    return m;
}

/// Deterministic training loss: latent at mu, no input noise.
double deterministic_loss(const VaeParams& p, const std::vector<Vec>& data, double kl_weight)
{
    if (data.empty()) return 0.0;
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    double total = 0.0;
    constexpr std::size_t kChunk = 256;
    for (std::size_t from = 0; from < data.size(); from += kChunk) {
        const std::size_t to = std::min(data.size(), from + kChunk);
        Batch b;
        b.x = columns(data, idx, from, to);
        b.input = b.x;
        b.eps = Mat::Zero(kLatent, b.x.cols());
        total += batch_loss(forward(p, b), b, kl_weight) * static_cast<double>(to - from);
    }
    return total / static_cast<double>(data.size());
}

}  // namespace

VaeParams VaeParams::random(std::uint64_t seed)
{
    VaeParams p;
    Rng rng(seed);
    auto xavier = [&](Mat& m) {
        const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        std::uniform_real_distribution<double> u(-a, a);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    };
    xavier(p.W1);
    xavier(p.Wmu);
    xavier(p.Wlv);
    xavier(p.W2);
    xavier(p.W3);
    return p;
}

std::size_t VaeParams::size() const
{
    std::size_t n = 0;
    VaeParams copy = *this;
    for_each_block(copy, [&](double*, Eigen::Index len) { n += static_cast<std::size_t>(len); });
    return n;
}

Vec VaeParams::flatten() const
{
    Vec v(static_cast<Eigen::Index>(size()));
    Eigen::Index at = 0;
    VaeParams copy = *this;
    for_each_block(copy, [&](double* data, Eigen::Index len) {
        v.segment(at, len) = Eigen::Map<Vec>(data, len);
        at += len;
    });
    return v;
}

void VaeParams::unflatten(const Vec& v)
{
    if (static_cast<std::size_t>(v.size()) != size()) throw Error(ErrorCode::MalformedMessage, "parameter count mismatch");
    Eigen::Index at = 0;
    for_each_block(*this, [&](double* data, Eigen::Index len) {
        Eigen::Map<Vec>(data, len) = v.segment(at, len);
        at += len;
    });
}

Vec raster_input(const world::Raster& r)
{
    if (r.w * r.h != kInput || static_cast<int>(r.pixels.size()) != kInput) {
        throw Error(ErrorCode::MalformedMessage, "raster must be 16x16");
    }
    return Eigen::Map<const Vec>(r.pixels.data(), kInput);
}

Encoding encode(const VaeParams& vae, const Vec& x)
{
    const Vec h1 = ((vae.W1 * x) + vae.b1).array().tanh();
    return {vae.Wmu * h1 + vae.bmu, (vae.Wlv * h1 + vae.blv).array().exp()};
}

Encoding encode(const VaeParams& vae, const world::Raster& r) { return encode(vae, raster_input(r)); }

Vec reparameterize(const Vec& mu, const Vec& sigma, const Vec& eps)
{
    return mu.array() + eps.array() * sigma.array().sqrt();
}

Vec decode(const VaeParams& vae, const Vec& z)
{
    const Vec h2 = ((vae.W2 * z) + vae.b2).array().tanh();
    return vae.W3 * h2 + vae.b3;
}

double loss(const VaeParams& vae, const Vec& x, const Vec& eps, const Vec& input_noise, double kl_weight)
{
    const Batch b = single(x, eps, input_noise);
    return batch_loss(forward(vae, b), b, kl_weight);
}

VaeParams backprop(const VaeParams& vae, const Vec& x, const Vec& eps, const Vec& input_noise, double kl_weight)
{
    const Batch b = single(x, eps, input_noise);
    return batch_gradient(vae, b, forward(vae, b), kl_weight);
}

double gradient_check(const VaeParams& vae, const Vec& x, const Vec& eps, std::uint64_t seed, int count,
                      const GradientFn& grad, double kl_weight)
{
    const Vec analytic = (grad ? grad(vae, x, eps) : backprop(vae, x, eps, {}, kl_weight)).flatten();
    const Vec theta = vae.flatten();
    Rng rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, theta.size() - 1);
    constexpr double h = 1e-5;
    double worst = 0.0;
    VaeParams probe = vae;
    for (int k = 0; k < count; ++k) {
        const Eigen::Index i = pick(rng);
        Vec t = theta;
        t[i] = theta[i] + h;
        probe.unflatten(t);
        const double fp = loss(probe, x, eps, {}, kl_weight);
        t[i] = theta[i] - h;
        probe.unflatten(t);
        const double fm = loss(probe, x, eps, {}, kl_weight);
        const double numeric = (fp - fm) / (2.0 * h);
        const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
    }
    return worst;
}

std::vector<Vec> augment(const std::vector<world::Raster>& rasters, int factor, std::uint64_t seed)
{
    std::vector<Vec> out;
    out.reserve(rasters.size() * static_cast<std::size_t>(std::max(1, factor)));
    Rng rng(seed);
    std::uniform_int_distribution<int> quarter(0, 3), shear(-1, 1);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (const world::Raster& r : rasters) {
        const Vec base = raster_input(r);
        out.push_back(base);
        for (int v = 1; v < factor; ++v) {
            const int rot = quarter(rng);
            const int sh = shear(rng);
            const double gain = 1.0 + jitter(rng);
            Vec a = Vec::Zero(kInput);
            for (int row = 0; row < 16; ++row) {
                for (int col = 0; col < 16; ++col) {
                    // Rotate source coordinates by rot quarter turns, then shear rows horizontally.
                    int sr = row, sc = col;
                    for (int q = 0; q < rot; ++q) std::tie(sr, sc) = std::pair{15 - sc, sr};
                    sc -= static_cast<int>(std::lround(sh * (row - 7.5) / 7.5));
                    if (sr < 0 || sr > 15 || sc < 0 || sc > 15) continue;
                    a[row * 16 + col] = base[sr * 16 + sc];
                }
            }
            for (Eigen::Index i = 0; i < kInput; ++i) a[i] = std::clamp(a[i] * gain + noise(rng), 0.0, 1.0);
            out.push_back(a);
        }
    }
    return out;
}

double reconstruction_mse(const VaeParams& vae, const std::vector<Vec>& data) { return deterministic_loss(vae, data, 0.0); }

VaeParams train(const VaeParams& init, const std::vector<world::Raster>& rasters, const TrainSpec& spec,
                std::uint64_t seed, TrainReport* report)
{
    VaeParams p = init;
    double lr = spec.learning_rate;
    if (report) *report = {{}, lr};
    if (spec.epochs <= 0 || rasters.empty()) return p;

    const std::vector<Vec> data = augment(rasters, spec.augmentation, derive_seed(seed, 0, 0));
    Rng rng(derive_seed(seed, 1, 0));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double current = deterministic_loss(p, data, spec.kl_weight);
    const std::size_t batch = static_cast<std::size_t>(std::max(1, spec.batch_size));

    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        const VaeParams before = p;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t from = 0; from < order.size(); from += batch) {
            const std::size_t to = std::min(order.size(), from + batch);
            Batch b;
            b.x = columns(data, order, from, to);
            b.input = b.x;
            for (Eigen::Index i = 0; i < b.input.size(); ++i) b.input.data()[i] += p.noise_sigma * normal(rng);
            b.eps.resize(kLatent, b.x.cols());
            for (Eigen::Index i = 0; i < b.eps.size(); ++i) b.eps.data()[i] = normal(rng);
            axpy(p, -lr, batch_gradient(p, b, forward(p, b), spec.kl_weight));
        }
        const double next = deterministic_loss(p, data, spec.kl_weight);
        if (!(next <= current)) {
            p = before;
            lr *= 0.5;
        } else {
            current = next;
        }
        if (report) report->epoch_loss.push_back(current);
    }
    if (report) report->final_learning_rate = lr;
    return p;
}

Json to_json(const VaeParams& vae)
{
    const Json layers = Json::array({{{"name", "W1"}, {"rows", kHidden}, {"cols", kInput}},
                                     {{"name", "b1"}, {"rows", kHidden}, {"cols", 1}},
                                     {{"name", "Wmu"}, {"rows", kLatent}, {"cols", kHidden}},
                                     {{"name", "bmu"}, {"rows", kLatent}, {"cols", 1}},
                                     {{"name", "Wlv"}, {"rows", kLatent}, {"cols", kHidden}},
                                     {{"name", "blv"}, {"rows", kLatent}, {"cols", 1}},
                                     {{"name", "W2"}, {"rows", kHidden}, {"cols", kLatent}},
                                     {{"name", "b2"}, {"rows", kHidden}, {"cols", 1}},
                                     {{"name", "W3"}, {"rows", kInput}, {"cols", kHidden}},
                                     {{"name", "b3"}, {"rows", kInput}, {"cols", 1}}});
    const Vec flat = vae.flatten();
    return Json{{"layers", layers},
                {"order", "column-major"},
                {"noise_sigma", vae.noise_sigma},
                {"params", std::vector<double>(flat.data(), flat.data() + flat.size())}};
}

VaeParams vae_from_json(const Json& j)
{
    try {
        VaeParams p;
        const auto flat = j.at("params").get<std::vector<double>>();
        p.unflatten(Eigen::Map<const Vec>(flat.data(), static_cast<Eigen::Index>(flat.size())));
        p.noise_sigma = j.value("noise_sigma", 0.001);
        return p;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::CorruptLog, std::string("bad VAE record: ") + e.what());
    }
}

}  // namespace skillpatch::vae

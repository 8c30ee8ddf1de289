#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "prorobust/errors.hpp"
#include "prorobust/grid.hpp"
#include "prorobust/types.hpp"

namespace prorobust {

using Rng = std::mt19937_64;

// Independent generator for a named substream of a base seed.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
    std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    for (auto s : stream) {
        words.push_back(static_cast<std::uint32_t>(s));
        words.push_back(static_cast<std::uint32_t>(s >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

namespace streams {
constexpr std::uint64_t data = 1;
constexpr std::uint64_t train = 2;
constexpr std::uint64_t cond_sampling = 3;
}  // namespace streams

// d uniform on [lo d0, hi d0], u uniform on [lo u0, hi u0], drawn
// independently per component.
inline std::vector<ContextSample> sample_contexts(const GridCase& c, std::size_t n, double lo, double hi, Rng& rng) {
    if (!(lo >= 0.0 && lo <= hi)) throw ConfigError("sample_contexts: need 0 <= lo <= hi");
    if (c.buses.empty() || c.wind_farms.empty()) throw ConfigError("sample_contexts: nominal demand or wind missing");
    const Vec d0 = c.nominal_demand(), u0 = c.nominal_wind(), umax = c.wind_capacity();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<ContextSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ContextSample z{Vec(d0.size()), Vec(u0.size())};
        for (Eigen::Index v = 0; v < d0.size(); ++v) z.d[v] = d0[v] * (lo + (hi - lo) * unit(rng));
        for (Eigen::Index j = 0; j < u0.size(); ++j)
            z.u[j] = std::min(umax[j], u0[j] * (lo + (hi - lo) * unit(rng)));
        out.push_back(std::move(z));
    }
    return out;
}

// Sigma_u with entries rel_std^2 * phi^(j != k) * u_j * u_k.
inline Mat error_covariance(const Vec& u, double rel_std, double phi) {
    const Vec s = rel_std * u;
    Mat cov = s * s.transpose();
    for (Eigen::Index j = 0; j < u.size(); ++j)
        for (Eigen::Index k = 0; k < u.size(); ++k)
            if (j != k) cov(j, k) *= phi;
    return cov;
}

enum class ErrorSource { conditional, pooled, binned };

struct ErrorBatch {
    Mat xi;  // N x D
    ErrorSource source = ErrorSource::conditional;

    Eigen::Index size() const { return xi.rows(); }
};

// n draws from N(0, Sigma_u), clipped to [-u, u_max - u].
inline ErrorBatch sample_errors_conditional(const Vec& u, std::size_t n, double rel_std, double phi, const Vec& u_max,
                                            Rng& rng) {
    const Eigen::Index D = u.size();
    if (u_max.size() != D) throw DimensionError("sample_errors_conditional: u_max has wrong dimension");
    if (!(phi > -1.0 && phi < 1.0)) throw ConfigError("phi must lie in (-1, 1)");
    if (rel_std < 0.0) throw ConfigError("rel_std must be nonnegative");
    // Sigma_u = diag(s) R diag(s) with R the equicorrelation matrix.
    Mat R = Mat::Constant(D, D, phi);
    R.diagonal().setOnes();
    Eigen::LLT<Mat> llt(R);
    if (llt.info() != Eigen::Success) throw ConfigError("phi gives an indefinite correlation matrix");
    const Mat L = llt.matrixL();
    const Vec s = rel_std * u;

    std::normal_distribution<double> normal(0.0, 1.0);
    ErrorBatch batch;
    batch.xi.resize(static_cast<Eigen::Index>(n), D);
    Vec z(D);
    for (std::size_t i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < D; ++j) z[j] = normal(rng);
        const Vec e = s.cwiseProduct(L * z);
        for (Eigen::Index j = 0; j < D; ++j)
            batch.xi(static_cast<Eigen::Index>(i), j) = std::clamp(e[j], -u[j], u_max[j] - u[j]);
    }
    return batch;
}

struct Sample {
    ContextSample zeta;
    Vec xi;  // realized forecast error
};

struct DatasetConfig {
    std::size_t n = 2000;
    std::size_t n_train = 1500;
    double lo = 0.5;
    double hi = 1.1;
    double rel_std = 0.15;
    double phi = 0.5;
    std::uint64_t seed = 1;
};

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
    DatasetConfig config;
    Vec nominal_demand, nominal_wind, wind_capacity;

    Mat train_errors() const {
        if (train.empty()) throw EmptyDatasetError("dataset has no training samples");
        Mat xi(static_cast<Eigen::Index>(train.size()), train.front().xi.size());
        for (std::size_t i = 0; i < train.size(); ++i) xi.row(static_cast<Eigen::Index>(i)) = train[i].xi.transpose();
        return xi;
    }
};

// Contexts first, then one conditional error per context, from separate
// substreams of the data seed. The first n_train samples form the training split.
inline Dataset generate_dataset(const GridCase& c, const DatasetConfig& cfg) {
    if (cfg.n == 0) throw ConfigError("dataset size must be positive");
    if (cfg.n_train > cfg.n) throw ConfigError("training split larger than dataset");
    Rng ctx_rng = make_rng(cfg.seed, {streams::data, 0});
    Rng err_rng = make_rng(cfg.seed, {streams::data, 1});
    const auto contexts = sample_contexts(c, cfg.n, cfg.lo, cfg.hi, ctx_rng);
    Dataset ds;
    ds.config = cfg;
    ds.nominal_demand = c.nominal_demand();
    ds.nominal_wind = c.nominal_wind();
    ds.wind_capacity = c.wind_capacity();
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        const auto e = sample_errors_conditional(contexts[i].u, 1, cfg.rel_std, cfg.phi, ds.wind_capacity, err_rng);
        Sample s{contexts[i], e.xi.row(0).transpose()};
        (i < cfg.n_train ? ds.train : ds.test).push_back(std::move(s));
    }
    return ds;
}

enum class BinKey { total_forecast, farm };

// Equal-width bins over a scalar key of the training forecasts; each bin
// pools the training errors whose forecast falls into it.
class ErrorBins {
public:
    ErrorBins() = default;

    ErrorBins(const Dataset& ds, std::size_t n_bins, BinKey key = BinKey::total_forecast, Eigen::Index farm = 0)
        : key_(key), farm_(farm) {
        if (n_bins == 0) throw ConfigError("bin count must be at least one");
        if (ds.train.empty()) throw EmptyDatasetError("cannot bin an empty training split");
        const Eigen::Index D = ds.train.front().xi.size();
        if (key == BinKey::farm && (farm < 0 || farm >= D)) throw ConfigError("bin key farm index out of range");
        lo_ = hi_ = key_of(ds.train.front().zeta.u);
        for (const auto& s : ds.train) {
            lo_ = std::min(lo_, key_of(s.zeta.u));
            hi_ = std::max(hi_, key_of(s.zeta.u));
        }
        std::vector<std::vector<Eigen::Index>> members(n_bins);
        for (std::size_t i = 0; i < ds.train.size(); ++i)
            members[index_of(key_of(ds.train[i].zeta.u), n_bins)].push_back(static_cast<Eigen::Index>(i));

        bins_.resize(n_bins);
        for (std::size_t b = 0; b < n_bins; ++b) {
            bins_[b].resize(static_cast<Eigen::Index>(members[b].size()), D);
            for (std::size_t r = 0; r < members[b].size(); ++r)
                bins_[b].row(static_cast<Eigen::Index>(r)) =
                    ds.train[static_cast<std::size_t>(members[b][r])].xi.transpose();
        }
        // Empty bins borrow from the nearest nonempty one, lower side first.
        for (std::size_t b = 0; b < n_bins; ++b) {
            if (!members[b].empty()) continue;
            empty_.push_back(b);
            for (std::size_t off = 1; off < n_bins; ++off) {
                if (b >= off && !members[b - off].empty()) {
                    bins_[b] = bins_[b - off];
                    break;
                }
                if (b + off < n_bins && !members[b + off].empty()) {
                    bins_[b] = bins_[b + off];
                    break;
                }
            }
        }
    }

    std::size_t size() const { return bins_.size(); }
    const std::vector<std::size_t>& empty_bins() const { return empty_; }

    // Out-of-range forecasts clamp to the edge bins.
    std::size_t bin_of(const Vec& u) const { return index_of(key_of(u), bins_.size()); }
    const Mat& lookup(const Vec& u) const { return bins_[bin_of(u)]; }
    const Mat& bin(std::size_t b) const { return bins_.at(b); }

private:
    double key_of(const Vec& u) const { return key_ == BinKey::total_forecast ? u.sum() : u[farm_]; }

    std::size_t index_of(double k, std::size_t n_bins) const {
        if (!(hi_ > lo_)) return 0;
        const double pos = (k - lo_) / (hi_ - lo_) * static_cast<double>(n_bins);
        if (!(pos > 0.0)) return 0;
        return std::min(n_bins - 1, static_cast<std::size_t>(pos));
    }

    BinKey key_ = BinKey::total_forecast;
    Eigen::Index farm_ = 0;
    double lo_ = 0.0, hi_ = 0.0;
    std::vector<Mat> bins_;
    std::vector<std::size_t> empty_;
};

inline ErrorBins bin_errors(const Dataset& ds, std::size_t n_bins, BinKey key = BinKey::total_forecast,
                            Eigen::Index farm = 0) {
    return ErrorBins(ds, n_bins, key, farm);
}

}  // namespace prorobust

#include "sl/measures.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "sl/rng.hpp"

namespace sl {

double logsumexp(const Vector& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

namespace {

// Merge duplicate support rows (exact coordinate match) by summing weights.
void merge_duplicates(Matrix& points, Vector& log_weights) {
    const int n = static_cast<int>(points.rows());
    std::map<std::vector<double>, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) {
        std::vector<double> key(points.cols());
        for (int j = 0; j < points.cols(); ++j) key[j] = points(i, j);
        groups[key].push_back(i);
    }
    if (static_cast<int>(groups.size()) == n) return;

    Matrix new_points(static_cast<int>(groups.size()), points.cols());
    Vector new_logw(static_cast<int>(groups.size()));
    int r = 0;
    for (const auto& [key, idx] : groups) {
        for (int j = 0; j < points.cols(); ++j) new_points(r, j) = key[j];
        Vector part(static_cast<int>(idx.size()));
        for (size_t k = 0; k < idx.size(); ++k) part[static_cast<int>(k)] = log_weights[idx[k]];
        new_logw[r] = logsumexp(part);
        ++r;
    }
    points = std::move(new_points);
    log_weights = std::move(new_logw);
}

}  // namespace

DiscreteMeasure DiscreteMeasure::from_log_weights(const Matrix& points, const Vector& log_weights) {
    if (points.rows() < 1) throw InvalidInput("DiscreteMeasure: N >= 1 required");
    if (points.rows() != log_weights.size()) {
        throw InvalidInput("DiscreteMeasure: points/weights length mismatch");
    }
    if (!points.allFinite()) throw InvalidInput("DiscreteMeasure: non-finite support point");
    for (int i = 0; i < log_weights.size(); ++i) {
        if (std::isnan(log_weights[i]) || log_weights[i] == std::numeric_limits<double>::infinity()) {
            throw InvalidInput("DiscreteMeasure: invalid log-weight");
        }
    }
    DiscreteMeasure m;
    m.points_ = points;
    m.log_weights_ = log_weights;
    merge_duplicates(m.points_, m.log_weights_);
    m.log_weights_.array() -= logsumexp(m.log_weights_);
    return m;
}

DiscreteMeasure::DiscreteMeasure(const Matrix& points, const Vector& weights) {
    if (weights.size() != points.rows()) {
        throw InvalidInput("DiscreteMeasure: points/weights length mismatch");
    }
    Vector logw(weights.size());
    for (int i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
            throw InvalidInput("DiscreteMeasure: weights must be finite and >= 0");
        }
        logw[i] = weights[i] > 0.0 ? std::log(weights[i])
                                   : -std::numeric_limits<double>::infinity();
    }
    if (weights.sum() <= 0.0) throw InvalidInput("DiscreteMeasure: total weight must be > 0");
    *this = from_log_weights(points, logw);
}

DiscreteMeasure DiscreteMeasure::point_mass(const Vector& x) {
    Matrix pts(1, x.size());
    pts.row(0) = x;
    return uniform(pts);
}

DiscreteMeasure DiscreteMeasure::uniform(const Matrix& points) {
    return from_log_weights(points, Vector::Zero(points.rows()));
}

GaussianMeasure::GaussianMeasure(const Vector& m, const SymMatrix& c) : mean(m), cov(c) {
    if (m.size() != c.dim()) throw InvalidInput("GaussianMeasure: mean/cov dim mismatch");
    const auto eig = spectral_decompose(c);
    if (eig.eigenvalues.minCoeff() < -1e-10) {
        throw NotPSD("GaussianMeasure: covariance has eigenvalue " +
                     std::to_string(eig.eigenvalues.minCoeff()));
    }
}

MomentSummary mean_cov(const Matrix& points, const Vector& log_weights) {
    const Vector w = log_weights.array().exp();
    MomentSummary out;
    out.mean = points.transpose() * w;
    const Matrix centered = points.rowwise() - out.mean.transpose();
    out.cov = SymMatrix(centered.transpose() * w.asDiagonal() * centered);
    out.trace_cov = out.cov.trace();
    return out;
}

MomentSummary mean_cov(const DiscreteMeasure& m) {
    return mean_cov(m.points(), m.log_weights());
}

std::vector<SymMatrix> third_moment(const DiscreteMeasure& m) {
    const int d = m.dim();
    const Vector w = m.weights();
    const Vector a = mean_cov(m).mean;
    const Matrix centered = m.points().rowwise() - a.transpose();
    std::vector<SymMatrix> slices;
    slices.reserve(d);
    for (int k = 0; k < d; ++k) {
        Matrix slice = Matrix::Zero(d, d);
        for (int i = 0; i < m.size(); ++i) {
            const double wk = w[i] * centered(i, k);
            slice.noalias() += wk * centered.row(i).transpose() * centered.row(i);
        }
        slices.emplace_back(slice);
    }
    return slices;
}

DiscreteMeasure discretize_gaussian(const GaussianMeasure& g, int n, std::uint64_t seed) {
    if (n < 1) throw InvalidInput("discretize_gaussian: n >= 1 required");
    const auto eig = spectral_decompose(g.cov);
    Vector lam = eig.eigenvalues;
    for (int i = 0; i < lam.size(); ++i) {
        if (lam[i] < -1e-10) throw NotPSD("discretize_gaussian: covariance not PSD");
        lam[i] = std::sqrt(std::max(lam[i], 0.0));
    }
    const Matrix root = eig.eigenvectors * lam.asDiagonal();

    GaussianStream rng(seed);
    Matrix pts(n, g.dim());
    for (int i = 0; i < n; ++i) {
        pts.row(i) = (g.mean + root * rng.standard_normal(g.dim())).transpose();
    }
    return DiscreteMeasure::uniform(pts);
}

namespace {

constexpr int kHaltonPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                 31, 37, 41, 43, 47, 53, 59, 61, 67, 71};

double radical_inverse(std::uint64_t i, int base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

}  // namespace

Matrix low_discrepancy(int n, int k) {
    if (n < 1 || k < 1) throw InvalidInput("low_discrepancy: n >= 1, k >= 1 required");
    if (k > static_cast<int>(sizeof(kHaltonPrimes) / sizeof(int))) {
        throw Unsupported("low_discrepancy: dimension beyond prime table");
    }
    Matrix out(n, k);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) {
            out(i, j) = 2.0 * radical_inverse(static_cast<std::uint64_t>(i) + 1,
                                              kHaltonPrimes[j]) - 1.0;
        }
    }
    return out;
}

namespace {

double independence_cost_moments(const Vector& ma, const SymMatrix& ca, const Vector& mb,
                                 const SymMatrix& cb) {
    if (ma.size() != mb.size()) throw InvalidInput("independence_cost: dimension mismatch");
    return (ma - mb).squaredNorm() + ca.trace() + cb.trace();
}

}  // namespace

double independence_cost(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    const auto a = mean_cov(mu), b = mean_cov(nu);
    return independence_cost_moments(a.mean, a.cov, b.mean, b.cov);
}

double independence_cost(const GaussianMeasure& mu, const GaussianMeasure& nu) {
    return independence_cost_moments(mu.mean, mu.cov, nu.mean, nu.cov);
}

PcaResult pca(const DiscreteMeasure& m, int k) {
    if (k < 1 || k > m.dim()) throw InvalidInput("pca: 1 <= k <= d required");
    const MomentSummary mom = mean_cov(m);
    const auto eig = spectral_decompose(mom.cov);
    PcaResult out;
    out.components = eig.eigenvectors.leftCols(k);
    out.mean = mom.mean;
    out.explained_variance = eig.eigenvalues.head(k);
    return out;
}

void save_csv(const DiscreteMeasure& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw InvalidInput("save_csv: cannot open " + path);
    for (int j = 0; j < m.dim(); ++j) os << "x_" << (j + 1) << ",";
    os << "weight\n";
    os.precision(17);
    const Vector w = m.weights();
    for (int i = 0; i < m.size(); ++i) {
        for (int j = 0; j < m.dim(); ++j) os << m.points()(i, j) << ",";
        os << w[i] << "\n";
    }
}

DiscreteMeasure load_measure_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("load_measure_csv: cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw InvalidInput("load_measure_csv: empty file");

    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() < 2) throw InvalidInput("load_measure_csv: need x_1..x_d,weight");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InvalidInput("load_measure_csv: no data rows");

    const int d = static_cast<int>(rows[0].size()) - 1;
    Matrix pts(static_cast<int>(rows.size()), d);
    Vector w(static_cast<int>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<int>(rows[i].size()) != d + 1) {
            throw InvalidInput("load_measure_csv: ragged row");
        }
        for (int j = 0; j < d; ++j) pts(static_cast<int>(i), j) = rows[i][j];
        w[static_cast<int>(i)] = rows[i][d];
    }
    return DiscreteMeasure(pts, w);
}

void save_json(const GaussianMeasure& g, const std::string& path) {
    nlohmann::json j;
    j["mean"] = std::vector<double>(g.mean.data(), g.mean.data() + g.mean.size());
    std::vector<std::vector<double>> cov(g.dim(), std::vector<double>(g.dim()));
    for (int r = 0; r < g.dim(); ++r)
        for (int c = 0; c < g.dim(); ++c) cov[r][c] = g.cov(r, c);
    j["cov"] = cov;
    std::ofstream os(path);
    if (!os) throw InvalidInput("save_json: cannot open " + path);
    os << j.dump(2) << "\n";
}

GaussianMeasure load_gaussian_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("load_gaussian_json: cannot open " + path);
    nlohmann::json j;
    is >> j;
    const auto mean_v = j.at("mean").get<std::vector<double>>();
    const auto cov_v = j.at("cov").get<std::vector<std::vector<double>>>();
    Vector mean(static_cast<int>(mean_v.size()));
    for (size_t i = 0; i < mean_v.size(); ++i) mean[static_cast<int>(i)] = mean_v[i];
    Matrix cov(static_cast<int>(cov_v.size()), static_cast<int>(cov_v.size()));
    for (size_t r = 0; r < cov_v.size(); ++r) {
        if (cov_v[r].size() != cov_v.size()) throw InvalidInput("load_gaussian_json: cov not square");
        for (size_t c = 0; c < cov_v.size(); ++c) {
            cov(static_cast<int>(r), static_cast<int>(c)) = cov_v[r][c];
        }
    }
    return GaussianMeasure(mean, SymMatrix(cov));
}

}  // namespace sl

#pragma once

#include "tosgp/error.hpp"
#include "tosgp/graph.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace tosgp {

/// Linear or nonlinear map between fields on the reference support and a
/// low-dimensional code, with the covariance push-forward used for UQ.
class DimensionReducer {
public:
    virtual ~DimensionReducer() = default;

    [[nodiscard]] virtual Index latent_dim() const = 0;
    [[nodiscard]] virtual Index field_dim() const = 0;
    [[nodiscard]] virtual Vector encode(const Vector& field) const = 0;
    [[nodiscard]] virtual Vector decode(const Vector& code) const = 0;
    /// Field covariance induced by independent code uncertainties.
    [[nodiscard]] virtual Matrix field_covariance(const Vector& code_stddev) const = 0;
    /// Diagonal of field_covariance without forming the matrix.
    [[nodiscard]] virtual Vector field_variance(const Vector& code_stddev) const = 0;
};

/// PCA of transferred fields: mean, orthonormal basis E (n_ref x Q) and
/// the retained covariance eigenvalues.
class PcaModel final : public DimensionReducer {
public:
    PcaModel() = default;
    PcaModel(Vector mean, Matrix basis, Vector eigenvalues, Vector explained_ratio)
        : mean_(std::move(mean)), basis_(std::move(basis)), eigenvalues_(std::move(eigenvalues)),
          explained_ratio_(std::move(explained_ratio)) {
        if (basis_.rows() != mean_.size() || eigenvalues_.size() != basis_.cols() ||
            explained_ratio_.size() != basis_.cols())
            throw DataError("pca: inconsistent model shapes");
    }

    [[nodiscard]] const Vector& mean() const noexcept { return mean_; }
    [[nodiscard]] const Matrix& basis() const noexcept { return basis_; }
    [[nodiscard]] const Vector& eigenvalues() const noexcept { return eigenvalues_; }
    [[nodiscard]] const Vector& explained_variance_ratio() const noexcept { return explained_ratio_; }

    [[nodiscard]] Index latent_dim() const override { return basis_.cols(); }
    [[nodiscard]] Index field_dim() const override { return mean_.size(); }

    [[nodiscard]] Vector encode(const Vector& field) const override {
        if (field.size() != field_dim())
            throw DataError("pca encode: field length " + std::to_string(field.size()) + " != " +
                            std::to_string(field_dim()));
        return basis_.transpose() * (field - mean_);
    }

    [[nodiscard]] Vector decode(const Vector& code) const override {
        if (code.size() != latent_dim())
            throw DataError("pca decode: code length " + std::to_string(code.size()) + " != " +
                            std::to_string(latent_dim()));
        return mean_ + basis_ * code;
    }

    [[nodiscard]] Matrix field_covariance(const Vector& code_stddev) const override {
        check_stddev(code_stddev);
        return basis_ * code_stddev.array().square().matrix().asDiagonal() * basis_.transpose();
    }

    [[nodiscard]] Vector field_variance(const Vector& code_stddev) const override {
        check_stddev(code_stddev);
        return basis_.array().square().matrix() * code_stddev.array().square().matrix();
    }

private:
    void check_stddev(const Vector& s) const {
        if (s.size() != latent_dim()) throw DataError("pca: expected one standard deviation per component");
        if ((s.array() < 0.0).any()) throw DataError("pca: negative standard deviation");
    }

    Vector mean_;
    Matrix basis_;
    Vector eigenvalues_;
    Vector explained_ratio_;
};

/// E Diag(sigma^2) E^T.
inline Matrix coeff_std_to_field_cov(const PcaModel& model, const Vector& sigmas) {
    return model.field_covariance(sigmas);
}

struct PcaOptions {
    double var_threshold = 0.95;
    Index min_components = 4;
};

/// Fits PCA on the rows of `fields` (N x n_ref). Keeps
/// Q = max(min_components, smallest q reaching var_threshold), capped at the
/// centered-data rank bound min(N - 1, n_ref). Q = 0 when the rows are all
/// identical. Each basis column is signed so its largest-magnitude entry is
/// positive.
inline PcaModel fit_pca(const Matrix& fields, const PcaOptions& opts = {}) {
    const Index n = fields.rows();
    const Index dim = fields.cols();
    if (n < 2) throw DataError("pca: need at least 2 fields");
    if (dim < 1) throw DataError("pca: empty fields");
    if (!(opts.var_threshold > 0.0 && opts.var_threshold <= 1.0))
        throw DataError("pca: variance threshold must lie in (0, 1]");
    if (opts.min_components < 1) throw DataError("pca: min components must be >= 1");
    if (!fields.allFinite()) throw DataError("pca: non-finite field values");

    Vector mean = fields.colwise().mean().transpose();
    const Matrix centered = fields.rowwise() - mean.transpose();
    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    const Vector eig_all = sv.array().square() / static_cast<double>(n - 1);
    const double total = eig_all.sum();

    const double scale = std::max(fields.norm(), 1e-300);
    if (sv.size() == 0 || sv(0) <= 1e-12 * scale || !(total > 0.0))
        return PcaModel(std::move(mean), Matrix(dim, 0), Vector(0), Vector(0));

    Index reach = eig_all.size();
    double cum = 0.0;
    for (Index q = 0; q < eig_all.size(); ++q) {
        cum += eig_all(q) / total;
        if (cum >= opts.var_threshold - 1e-12) {
            reach = q + 1;
            break;
        }
    }
    const Index cap = std::min({n - 1, dim, static_cast<Index>(sv.size())});
    const Index q = std::min(std::max(opts.min_components, reach), cap);

    Matrix basis = svd.matrixV().leftCols(q);
    for (Index k = 0; k < q; ++k) {
        Index arg = 0;
        basis.col(k).cwiseAbs().maxCoeff(&arg);
        if (basis(arg, k) < 0.0) basis.col(k) = -basis.col(k);
    }
    Vector eig = eig_all.head(q).cwiseMax(0.0);
    Vector ratio = eig / total;
    return PcaModel(std::move(mean), std::move(basis), std::move(eig), std::move(ratio));
}

} // namespace tosgp

#include "tosgp/dimred.hpp"
#include "tosgp/random.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

using namespace tosgp;

namespace {

Matrix random_matrix(Rng& rng, Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

Matrix rank3_family(Rng& rng, Index n, Index dim) {
    const Matrix basis = random_matrix(rng, 3, dim);
    const Vector offset = Vector::LinSpaced(dim, -1.0, 1.0);
    Matrix out = random_matrix(rng, n, 3) * basis;
    out.rowwise() += offset.transpose();
    return out;
}

} // namespace

TEST(Pca, RankThreeFamilyKeepsMinimumComponents) {
    Rng rng(1);
    const Matrix y = rank3_family(rng, 30, 50);
    const PcaModel pca = fit_pca(y, {.var_threshold = 0.95, .min_components = 4});
    EXPECT_EQ(pca.latent_dim(), 4);
    for (Index i = 0; i < y.rows(); ++i) {
        const Vector row = y.row(i).transpose();
        EXPECT_LE((pca.decode(pca.encode(row)) - row).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Pca, IdenticalRowsGiveZeroComponents) {
    const Matrix y = Vector::LinSpaced(10, 0.0, 1.0).transpose().replicate(5, 1);
    const PcaModel pca = fit_pca(y);
    EXPECT_EQ(pca.latent_dim(), 0);
    const Vector row = y.row(0).transpose();
    EXPECT_LE((pca.decode(pca.encode(row)) - row).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(pca.field_variance(Vector(0)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Pca, CappedByRankBound) {
    Rng rng(2);
    const PcaModel pca = fit_pca(random_matrix(rng, 3, 20), {.var_threshold = 1.0, .min_components = 10});
    EXPECT_EQ(pca.latent_dim(), 2);
}

TEST(Pca, EigenvaluesMatchDenseCovarianceOracle) {
    Rng rng(3);
    const Matrix y = random_matrix(rng, 20, 50);
    const PcaModel pca = fit_pca(y, {.var_threshold = 0.9, .min_components = 1});

    const Matrix centered = y.rowwise() - y.colwise().mean();
    const Matrix cov = centered.transpose() * centered / 19.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const Vector ev = es.eigenvalues().reverse();
    const double total = ev.sum();

    Index expect_q = 0;
    double cum = 0.0;
    while (cum < 0.9) cum += ev(expect_q++) / total;
    ASSERT_EQ(pca.latent_dim(), expect_q);
    for (Index k = 0; k < expect_q; ++k) {
        EXPECT_NEAR(pca.eigenvalues()(k), ev(k), 1e-10 * ev(0));
        EXPECT_NEAR(pca.explained_variance_ratio()(k), ev(k) / total, 1e-12);
        const Vector e = pca.basis().col(k);
        EXPECT_LE((cov * e - ev(k) * e).norm(), 1e-9 * ev(0));
        Index arg = 0;
        e.cwiseAbs().maxCoeff(&arg);
        EXPECT_GT(e(arg), 0.0);
    }
}

TEST(Pca, BasisIsOrthonormal) {
    Rng rng(4);
    const PcaModel pca = fit_pca(random_matrix(rng, 15, 40), {.var_threshold = 0.99, .min_components = 4});
    const Matrix gram = pca.basis().transpose() * pca.basis();
    EXPECT_LE((gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pca, ReconstructionIsAffineProjector) {
    Rng rng(5);
    const Matrix y = random_matrix(rng, 12, 30);
    const PcaModel pca = fit_pca(y, {.var_threshold = 0.8, .min_components = 2});
    const Matrix& e = pca.basis();
    const Matrix proj = e * e.transpose();
    for (int trial = 0; trial < 5; ++trial) {
        const Vector v = random_matrix(rng, 30, 1);
        const Vector rec = pca.decode(pca.encode(v));
        const Vector oracle = pca.mean() + proj * (v - pca.mean());
        EXPECT_LE((rec - oracle).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((pca.decode(pca.encode(rec)) - rec).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Pca, EncodeDecodeKnownBasis) {
    Vector mean(3);
    mean << 1, 2, 3;
    Matrix basis = Matrix::Zero(3, 2);
    basis(0, 0) = 1.0;
    basis(2, 1) = 1.0;
    const PcaModel pca(mean, basis, Vector::Ones(2), Vector::Constant(2, 0.5));
    Vector v(3);
    v << 4, 7, 1;
    const Vector code = pca.encode(v);
    EXPECT_EQ(code(0), 3.0);
    EXPECT_EQ(code(1), -2.0);
    Vector back(3);
    back << 4, 2, 1;
    EXPECT_EQ(pca.decode(code), back);
    EXPECT_THROW(pca.encode(Vector::Zero(2)), DataError);
    EXPECT_THROW(pca.decode(Vector::Zero(3)), DataError);
}

TEST(Pca, FieldCovariance) {
    Rng rng(6);
    const PcaModel pca = fit_pca(random_matrix(rng, 10, 25), {.var_threshold = 0.9, .min_components = 4});
    const Index q = pca.latent_dim();
    Vector sig(q);
    for (Index k = 0; k < q; ++k) sig(k) = 0.1 + rng.uniform();
    const Matrix cov = coeff_std_to_field_cov(pca, sig);
    EXPECT_LE((cov - cov.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    EXPECT_NEAR(cov.trace(), sig.squaredNorm(), 1e-12);
    EXPECT_LE((pca.field_variance(sig) - cov.diagonal()).cwiseAbs().maxCoeff(), 1e-14);

    Vector one = Vector::Zero(q);
    one(0) = 2.0;
    const Vector e0 = pca.basis().col(0);
    EXPECT_LE((coeff_std_to_field_cov(pca, one) - 4.0 * e0 * e0.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(coeff_std_to_field_cov(pca, Vector::Zero(q)).cwiseAbs().maxCoeff(), 0.0);

    one(1) = -1.0;
    EXPECT_THROW(coeff_std_to_field_cov(pca, one), DataError);
}

TEST(Pca, InvalidInputs) {
    EXPECT_THROW(fit_pca(Matrix::Zero(1, 5)), DataError);
    EXPECT_THROW(fit_pca(Matrix::Zero(3, 5), {.var_threshold = 0.0}), DataError);
    Matrix bad = Matrix::Zero(3, 2);
    bad(1, 1) = std::nan("");
    EXPECT_THROW(fit_pca(bad), DataError);
}

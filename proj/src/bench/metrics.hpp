#ifndef A2V_BENCH_METRICS_HPP
#define A2V_BENCH_METRICS_HPP

#include <vector>

#include "../core/tensor.hpp"
#include "../data/data.hpp"

namespace a2v::bench {

// Pearson correlation via the two-pass deviation form; throws when either
// series has zero variance (correlation undefined).
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Per-frame mean intensity of the mouth rectangle over pixels and channels.
std::vector<double> mouth_intensity_series(const Tensor& video, const data::Rect& mouth);

// Correlation between the mouth-region intensity and the driving envelope;
// the lip-sync stand-in (no pretrained network involved).
double sync_proxy(const Tensor& video, const std::vector<double>& envelope, const data::Rect& mouth);

// Mean absolute inter-frame difference at seam transitions minus the median
// inter-frame difference elsewhere. Seam index t means the transition from
// frame t-1 to frame t. Empty seam list scores 0.
double boundary_score(const Tensor& video, const std::vector<int64_t>& seams);

// Frechet distance between Gaussians fitted (population moments) to row sets
// A and B: |mu_A - mu_B|^2 + tr(S_A + S_B - 2 (S_A S_B)^{1/2}), with 1e-6
// diagonal regularization before the matrix square roots.
double latent_frechet(const Tensor& set_a, const Tensor& set_b);

// Cyclic Jacobi eigendecomposition of a symmetric matrix; eigenvalues
// ascending, eigenvectors in columns.
void jacobi_eigen(const Tensor& sym, Tensor& eigvals, Tensor& eigvecs, int max_sweeps = 64);

double median(std::vector<double> v);

}  // namespace a2v::bench

#endif

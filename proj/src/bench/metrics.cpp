#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace a2v::bench {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: needs at least 2 samples");
    size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double dxx = 0.0, dyy = 0.0, dxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        dxx += dx * dx;
        dyy += dy * dy;
        dxy += dx * dy;
    }
    if (dxx == 0.0 || dyy == 0.0)
        throw std::invalid_argument("pearson: zero-variance series, correlation undefined");
    return dxy / std::sqrt(dxx * dyy);
}

std::vector<double> mouth_intensity_series(const Tensor& video, const data::Rect& mouth) {
    if (video.ndim() != 4) throw std::invalid_argument("mouth_intensity_series: expected (F,H,W,C)");
    int64_t F = video.shape[0], H = video.shape[1], W = video.shape[2], C = video.shape[3];
    if (!mouth.inside(W, H)) throw std::invalid_argument("mouth_intensity_series: rectangle outside frame");
    std::vector<double> out(static_cast<size_t>(F));
    double count = static_cast<double>(mouth.w * mouth.h * C);
    for (int64_t i = 0; i < F; ++i) {
        double s = 0.0;
        for (int64_t y = mouth.y; y < mouth.y + mouth.h; ++y)
            for (int64_t x = mouth.x; x < mouth.x + mouth.w; ++x)
                for (int64_t c = 0; c < C; ++c) s += video.at4(i, y, x, c);
        out[static_cast<size_t>(i)] = s / count;
    }
    return out;
}

double sync_proxy(const Tensor& video, const std::vector<double>& envelope, const data::Rect& mouth) {
    std::vector<double> series = mouth_intensity_series(video, mouth);
    if (series.size() != envelope.size())
        throw std::invalid_argument("sync_proxy: envelope length " + std::to_string(envelope.size()) +
                                    " does not match frame count " + std::to_string(series.size()));
    return pearson(series, envelope);
}

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty set");
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double boundary_score(const Tensor& video, const std::vector<int64_t>& seams) {
    if (video.ndim() != 4 || video.shape[0] < 2)
        throw std::invalid_argument("boundary_score: needs a video with at least 2 frames");
    int64_t F = video.shape[0];
    int64_t per = video.numel() / F;
    std::vector<double> diffs(static_cast<size_t>(F - 1));
    for (int64_t t = 1; t < F; ++t) {
        double s = 0.0;
        for (int64_t j = 0; j < per; ++j)
            s += std::fabs(video.data[static_cast<size_t>(t * per + j)] -
                           video.data[static_cast<size_t>((t - 1) * per + j)]);
        diffs[static_cast<size_t>(t - 1)] = s / static_cast<double>(per);
    }
    if (seams.empty()) return 0.0;
    std::vector<bool> is_seam(static_cast<size_t>(F), false);
    double seam_sum = 0.0;
    for (int64_t s : seams) {
        if (s < 1 || s >= F) throw std::invalid_argument("boundary_score: seam index " + std::to_string(s) +
                                                         " not an interior transition");
        is_seam[static_cast<size_t>(s)] = true;
        seam_sum += diffs[static_cast<size_t>(s - 1)];
    }
    std::vector<double> rest;
    for (int64_t t = 1; t < F; ++t)
        if (!is_seam[static_cast<size_t>(t)]) rest.push_back(diffs[static_cast<size_t>(t - 1)]);
    if (rest.empty()) throw std::invalid_argument("boundary_score: no intra-clip transitions left");
    return seam_sum / static_cast<double>(seams.size()) - median(std::move(rest));
}

void jacobi_eigen(const Tensor& sym, Tensor& eigvals, Tensor& eigvecs, int max_sweeps) {
    if (sym.ndim() != 2 || sym.shape[0] != sym.shape[1])
        throw std::invalid_argument("jacobi_eigen: expected a square matrix");
    int64_t n = sym.shape[0];
    Tensor a = sym;
    eigvecs = Tensor({n, n});
    for (int64_t i = 0; i < n; ++i) eigvecs.at2(i, i) = 1.0;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) off += a.at2(p, q) * a.at2(p, q);
        if (off < 1e-24) break;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) {
                double apq = a.at2(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                double app = a.at2(p, p), aqq = a.at2(q, q);
                double theta = 0.5 * (aqq - app) / apq;
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int64_t k = 0; k < n; ++k) {
                    double akp = a.at2(k, p), akq = a.at2(k, q);
                    a.at2(k, p) = c * akp - s * akq;
                    a.at2(k, q) = s * akp + c * akq;
                }
                for (int64_t k = 0; k < n; ++k) {
                    double apk = a.at2(p, k), aqk = a.at2(q, k);
                    a.at2(p, k) = c * apk - s * aqk;
                    a.at2(q, k) = s * apk + c * aqk;
                }
                for (int64_t k = 0; k < n; ++k) {
                    double vkp = eigvecs.at2(k, p), vkq = eigvecs.at2(k, q);
                    eigvecs.at2(k, p) = c * vkp - s * vkq;
                    eigvecs.at2(k, q) = s * vkp + c * vkq;
                }
            }
    }
    eigvals = Tensor({n});
    for (int64_t i = 0; i < n; ++i) eigvals[i] = a.at2(i, i);
}

namespace {

void fit_gaussian(const Tensor& rows, std::vector<double>& mu, Tensor& cov) {
    int64_t n = rows.shape[0], d = rows.shape[1];
    mu.assign(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) mu[static_cast<size_t>(j)] += rows.at2(i, j);
    for (double& v : mu) v /= static_cast<double>(n);
    cov = Tensor({d, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) {
            double dj = rows.at2(i, j) - mu[static_cast<size_t>(j)];
            for (int64_t k = j; k < d; ++k)
                cov.at2(j, k) += dj * (rows.at2(i, k) - mu[static_cast<size_t>(k)]);
        }
    for (int64_t j = 0; j < d; ++j)
        for (int64_t k = j; k < d; ++k) {
            double v = cov.at2(j, k) / static_cast<double>(n);
            cov.at2(j, k) = v;
            cov.at2(k, j) = v;
        }
}

Tensor sqrtm_psd(const Tensor& sym) {
    Tensor vals, vecs;
    jacobi_eigen(sym, vals, vecs);
    int64_t n = sym.shape[0];
    Tensor out({n, n});
    for (int64_t k = 0; k < n; ++k) {
        double lam = std::max(0.0, vals[k]);
        double s = std::sqrt(lam);
        if (s == 0.0) continue;
        for (int64_t i = 0; i < n; ++i) {
            double vis = vecs.at2(i, k) * s;
            if (vis == 0.0) continue;
            for (int64_t j = 0; j < n; ++j) out.at2(i, j) += vis * vecs.at2(j, k);
        }
    }
    return out;
}

Tensor matmul_sym(const Tensor& a, const Tensor& b) {
    int64_t n = a.shape[0];
    Tensor out({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t k = 0; k < n; ++k) {
            double v = a.at2(i, k);
            if (v == 0.0) continue;
            for (int64_t j = 0; j < n; ++j) out.at2(i, j) += v * b.at2(k, j);
        }
    return out;
}

}  // namespace

double latent_frechet(const Tensor& set_a, const Tensor& set_b) {
    if (set_a.ndim() != 2 || set_b.ndim() != 2 || set_a.shape[1] != set_b.shape[1])
        throw std::invalid_argument("latent_frechet: expected row sets with a shared feature dim");
    if (set_a.shape[0] < 2 || set_b.shape[0] < 2)
        throw std::invalid_argument("latent_frechet: each set needs at least 2 samples");
    int64_t d = set_a.shape[1];
    std::vector<double> mu_a, mu_b;
    Tensor cov_a, cov_b;
    fit_gaussian(set_a, mu_a, cov_a);
    fit_gaussian(set_b, mu_b, cov_b);
    for (int64_t i = 0; i < d; ++i) {
        cov_a.at2(i, i) += 1e-6;
        cov_b.at2(i, i) += 1e-6;
    }
    double mean_term = 0.0;
    for (int64_t i = 0; i < d; ++i) {
        double diff = mu_a[static_cast<size_t>(i)] - mu_b[static_cast<size_t>(i)];
        mean_term += diff * diff;
    }
    double tr_a = 0.0, tr_b = 0.0;
    for (int64_t i = 0; i < d; ++i) {
        tr_a += cov_a.at2(i, i);
        tr_b += cov_b.at2(i, i);
    }
    // tr((S_A S_B)^{1/2}) = tr((sqrt(S_A) S_B sqrt(S_A))^{1/2})
    Tensor ra = sqrtm_psd(cov_a);
    Tensor inner = matmul_sym(matmul_sym(ra, cov_b), ra);
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = i + 1; j < d; ++j) {
            double v = 0.5 * (inner.at2(i, j) + inner.at2(j, i));
            inner.at2(i, j) = v;
            inner.at2(j, i) = v;
        }
    Tensor vals, vecs;
    jacobi_eigen(inner, vals, vecs);
    double tr_sqrt = 0.0;
    for (int64_t i = 0; i < d; ++i) tr_sqrt += std::sqrt(std::max(0.0, vals[i]));
    return mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
}

}  // namespace a2v::bench

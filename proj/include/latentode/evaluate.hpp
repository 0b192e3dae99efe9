#ifndef LATENTODE_EVALUATE_HPP
#define LATENTODE_EVALUATE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "latentode/baseline.hpp"
#include "latentode/dataset.hpp"
#include "latentode/latent_ode.hpp"
#include "latentode/train.hpp"

namespace latentode {

// ---------------------------------------------------------------------------
// PCA on small matrices
// ---------------------------------------------------------------------------

// cyclic Jacobi eigendecomposition of a symmetric d x d matrix;
// eigvecs stores eigenvectors as columns, eigvals descending
inline void jacobi_eigen_sym(std::vector<double> a, std::size_t d, std::vector<double>& eigvals,
                             std::vector<double>& eigvecs) {
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + p], vkq = v[k * d + q];
          v[k * d + p] = c * vkp - s * vkq;
          v[k * d + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return a[i * d + i] > a[j * d + j]; });
  eigvals.resize(d);
  eigvecs.assign(d * d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    eigvals[c] = a[order[c] * d + order[c]];
    for (std::size_t r = 0; r < d; ++r) eigvecs[r * d + c] = v[r * d + order[c]];
  }
}

struct PcaProjection {
  std::size_t dim = 0;
  // two principal axes, components[c * dim + j] for c in {0, 1}
  std::vector<double> components;
  // projected points, points[i * 2 + c]
  std::vector<double> points;
  std::array<double, 2> explained_variance{0.0, 0.0};
  bool degenerate = false;  // zero-variance input
};

// data is row-major [n, d]; mean-center, eigendecompose the sample
// covariance, keep the top two axes
inline PcaProjection pca_project(const std::vector<double>& data, std::size_t n, std::size_t d) {
  if (n < 3) throw std::invalid_argument("pca_project: need at least 3 points");
  if (d < 2) throw std::invalid_argument("pca_project: need at least 2 dimensions");
  if (data.size() != n * d) throw ShapeError("pca_project: data size does not match n*d");

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += data[i * d + j];
  for (double& m : mean) m /= static_cast<double>(n);

  std::vector<double> centered(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centered[i * d + j] = data[i * d + j] - mean[j];

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p; q < d; ++q) cov[p * d + q] += centered[i * d + p] * centered[i * d + q];
  for (std::size_t p = 0; p < d; ++p)
    for (std::size_t q = p; q < d; ++q) {
      cov[p * d + q] /= static_cast<double>(n - 1);
      cov[q * d + p] = cov[p * d + q];
    }

  double trace = 0;
  for (std::size_t p = 0; p < d; ++p) trace += cov[p * d + p];

  PcaProjection out;
  out.dim = d;
  out.components.assign(2 * d, 0.0);
  out.points.assign(n * 2, 0.0);
  if (trace <= 1e-300) {
    out.degenerate = true;  // ratios stay 0 by definition
    out.components[0] = 1.0;
    out.components[d + 1] = 1.0;
    return out;
  }

  std::vector<double> eigvals, eigvecs;
  jacobi_eigen_sym(cov, d, eigvals, eigvecs);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t j = 0; j < d; ++j) out.components[c * d + j] = eigvecs[j * d + c];
    out.explained_variance[c] = std::max(eigvals[c], 0.0) / trace;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      double acc = 0;
      for (std::size_t j = 0; j < d; ++j) acc += centered[i * d + j] * out.components[c * d + j];
      out.points[i * 2 + c] = acc;
    }
  return out;
}

// ---------------------------------------------------------------------------
// reconstruction RMSE over dataset rows (posterior-mean decoding for the node)
// ---------------------------------------------------------------------------

namespace detail {
inline std::vector<double> per_row_rmse(const std::vector<Tensor>& recon,
                                        const std::vector<Tensor>& truth) {
  const std::size_t bsz = recon[0].rank() == 2 ? recon[0].shape()[0] : 1;
  const std::size_t width = recon[0].size() / bsz;
  std::vector<double> acc(bsz, 0.0);
  for (std::size_t t = 0; t < recon.size(); ++t)
    for (std::size_t r = 0; r < bsz; ++r)
      for (std::size_t k = 0; k < width; ++k) {
        const double d = recon[t][r * width + k] - truth[t][r * width + k];
        acc[r] += d * d;
      }
  for (double& a : acc) a = std::sqrt(a / static_cast<double>(recon.size() * width));
  return acc;
}
}  // namespace detail

inline std::vector<double> per_sample_rmse_node(const LatentOdeModel& model, const Dataset& ds,
                                                const std::vector<std::size_t>& rows,
                                                std::size_t chunk = 256) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t pos = 0; pos < rows.size(); pos += chunk) {
    const std::size_t end = std::min(pos + chunk, rows.size());
    std::vector<std::size_t> part(rows.begin() + pos, rows.begin() + end);
    std::vector<Tensor> xs = make_batch(ds, part, ds.seq_len);
    PosteriorParams q = model.encode(xs);
    std::vector<Tensor> recon = model.decode(q.mu, ds.times, ds.times.front());
    auto r = detail::per_row_rmse(recon, xs);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

inline std::vector<double> per_sample_rmse_baseline(const LstmAutoencoder& model,
                                                    const Dataset& ds,
                                                    const std::vector<std::size_t>& rows,
                                                    std::size_t chunk = 256) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t pos = 0; pos < rows.size(); pos += chunk) {
    const std::size_t end = std::min(pos + chunk, rows.size());
    std::vector<std::size_t> part(rows.begin() + pos, rows.begin() + end);
    std::vector<Tensor> xs = make_batch(ds, part, ds.seq_len);
    auto r = detail::per_row_rmse(model.forward(xs), xs);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stddev_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() > 1 ? v.size() - 1 : 1));
}

// ---------------------------------------------------------------------------
// RMSE table (paper row order: spiral, spring combinations, solar)
// ---------------------------------------------------------------------------

struct RmseRow {
  std::string experiment;
  double node = 0;
  double baseline = 0;
};

inline int experiment_order_key(const std::string& name) {
  static const char* order[] = {"spiral",   "spring1",  "spring2",  "spring3", "spring12",
                                "spring13", "spring23", "spring123", "solar"};
  for (int i = 0; i < 9; ++i)
    if (name == order[i]) return i;
  return 100;
}

inline void write_rmse_table(const std::string& path, std::vector<RmseRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const RmseRow& a, const RmseRow& b) {
    return experiment_order_key(a.experiment) < experiment_order_key(b.experiment);
  });
  std::ofstream out(path);
  if (!out) throw IoError("write_rmse_table: cannot write '" + path + "'");
  out << "experiment,node,baseline\n";
  for (const auto& r : rows)
    out << r.experiment << "," << csv::fmt(r.node) << "," << csv::fmt(r.baseline) << "\n";
}

// ---------------------------------------------------------------------------
// reconstruction export: t, truth, reconstruction, region
// ---------------------------------------------------------------------------

// The sample is encoded with eps = 0; the observed grid is decoded with the
// ground truth alongside, the extrapolation grid without. A diverged
// extrapolation is recorded as a truncation marker row instead of a crash.
inline void export_reconstruction_node(const std::string& path, const LatentOdeModel& model,
                                       const std::vector<Tensor>& sample,
                                       const TimeGrid& grid_obs, const TimeGrid& grid_extrap) {
  std::ofstream out(path);
  if (!out) throw IoError("export_reconstruction: cannot write '" + path + "'");
  out << "t,truth_x,truth_y,recon_x,recon_y,region\n";
  PosteriorParams q = model.encode(sample);
  std::vector<Tensor> recon = model.decode(q.mu, grid_obs, grid_obs.front());
  for (std::size_t t = 0; t < grid_obs.size(); ++t)
    out << csv::fmt(grid_obs[t]) << "," << csv::fmt(sample[t][0]) << ","
        << csv::fmt(sample[t][1]) << "," << csv::fmt(recon[t][0]) << ","
        << csv::fmt(recon[t][1]) << ",observed\n";
  if (grid_extrap.empty()) return;
  try {
    std::vector<Tensor> ex = model.decode(q.mu, grid_extrap, grid_obs.front());
    for (std::size_t t = 0; t < grid_extrap.size(); ++t)
      out << csv::fmt(grid_extrap[t]) << ",,," << csv::fmt(ex[t][0]) << ","
          << csv::fmt(ex[t][1]) << ",extrapolated\n";
  } catch (const IntegrationDivergedError& e) {
    out << csv::fmt(e.t) << ",,,,,truncated\n";
  }
}

// the baseline reconstructs the observed window only (no extrapolation)
inline void export_reconstruction_baseline(const std::string& path, const LstmAutoencoder& model,
                                           const std::vector<Tensor>& sample,
                                           const TimeGrid& grid_obs) {
  std::ofstream out(path);
  if (!out) throw IoError("export_reconstruction: cannot write '" + path + "'");
  out << "t,truth_x,truth_y,recon_x,recon_y,region\n";
  std::vector<Tensor> recon = model.forward(sample);
  for (std::size_t t = 0; t < grid_obs.size(); ++t)
    out << csv::fmt(grid_obs[t]) << "," << csv::fmt(sample[t][0]) << ","
        << csv::fmt(sample[t][1]) << "," << csv::fmt(recon[t][0]) << ","
        << csv::fmt(recon[t][1]) << ",observed\n";
}

// ---------------------------------------------------------------------------
// latent space scatter: test-split posterior means projected to 2-D
// ---------------------------------------------------------------------------

inline PcaProjection latent_scatter(const std::string& path, const LatentOdeModel& model,
                                    const Dataset& ds) {
  if (!ds.has_labels()) throw std::invalid_argument("latent_scatter: dataset has no labels");
  const auto rows = ds.indices_of(Split::Test);
  if (rows.size() < 3) throw std::invalid_argument("latent_scatter: need at least 3 test samples");
  const std::size_t L = model.config().latent_dim;
  std::vector<double> latents(rows.size() * L);
  const std::size_t chunk = 256;
  for (std::size_t pos = 0; pos < rows.size(); pos += chunk) {
    const std::size_t end = std::min(pos + chunk, rows.size());
    std::vector<std::size_t> part(rows.begin() + pos, rows.begin() + end);
    std::vector<Tensor> xs = make_batch(ds, part, ds.seq_len);
    PosteriorParams q = model.encode(xs);
    for (std::size_t r = 0; r < part.size(); ++r)
      for (std::size_t j = 0; j < L; ++j) latents[(pos + r) * L + j] = q.mu[r * L + j];
  }
  PcaProjection proj = pca_project(latents, rows.size(), L);
  std::ofstream out(path);
  if (!out) throw IoError("latent_scatter: cannot write '" + path + "'");
  out << "# explained_variance," << csv::fmt(proj.explained_variance[0]) << ","
      << csv::fmt(proj.explained_variance[1]) << ","
      << csv::fmt(proj.explained_variance[0] + proj.explained_variance[1]) << "\n";
  out << "pc1,pc2,label\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out << csv::fmt(proj.points[i * 2]) << "," << csv::fmt(proj.points[i * 2 + 1]) << ","
        << ds.labels[rows[i]] << "\n";
  return proj;
}

// ---------------------------------------------------------------------------
// timing report (paper table structure: experiment, node, baseline)
// ---------------------------------------------------------------------------

// arithmetic mean of per-epoch seconds, first record dropped as warm-up
inline double mean_epoch_seconds(const std::vector<EpochRecord>& records) {
  if (records.empty()) throw std::invalid_argument("mean_epoch_seconds: empty log");
  if (records.size() == 1) return records[0].seconds;
  double s = 0;
  for (std::size_t i = 1; i < records.size(); ++i) s += records[i].seconds;
  return s / static_cast<double>(records.size() - 1);
}

struct TimingRow {
  std::string experiment;
  double node_seconds = 0;
  double baseline_seconds = 0;
};

inline void write_timing_csv(const std::string& path, std::vector<TimingRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const TimingRow& a, const TimingRow& b) {
    return experiment_order_key(a.experiment) < experiment_order_key(b.experiment);
  });
  std::ofstream out(path);
  if (!out) throw IoError("write_timing_csv: cannot write '" + path + "'");
  out << "experiment,node_s_per_epoch,baseline_s_per_epoch\n";
  for (const auto& r : rows)
    out << r.experiment << "," << csv::fmt(r.node_seconds) << ","
        << csv::fmt(r.baseline_seconds) << "\n";
}

}  // namespace latentode

#endif  // LATENTODE_EVALUATE_HPP

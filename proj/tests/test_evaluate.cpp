#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "latentode/evaluate.hpp"
#include "latentode/experiment.hpp"

using namespace latentode;
using Catch::Approx;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "lode_eval_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

LatentOdeConfig toy_arch() {
  LatentOdeConfig cfg;
  cfg.encoder_hidden = 6;
  cfg.field_hidden_layers = 1;
  cfg.field_hidden = 5;
  cfg.readout_hidden = 5;
  cfg.substeps = 1;
  return cfg;
}

// power iteration with deflation: the independent PCA oracle
void power_iteration_top2(const std::vector<double>& cov, std::size_t d,
                          std::vector<double>& v1, std::vector<double>& v2, double& l1,
                          double& l2) {
  auto matvec = [&](const std::vector<double>& m, const std::vector<double>& x) {
    std::vector<double> y(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) y[i] += m[i * d + j] * x[j];
    return y;
  };
  auto normalize = [&](std::vector<double>& x) {
    double n = 0;
    for (double v : x) n += v * v;
    n = std::sqrt(n);
    for (double& v : x) v /= n;
    return n;
  };
  auto top = [&](const std::vector<double>& m, std::vector<double>& vec) {
    vec.assign(d, 0.0);
    vec[0] = 1.0;
    vec[d - 1] = 0.5;
    double lambda = 0;
    for (int it = 0; it < 20000; ++it) {
      std::vector<double> next = matvec(m, vec);
      lambda = 0;
      for (std::size_t i = 0; i < d; ++i) lambda += next[i] * vec[i];
      const double n = normalize(next);
      (void)n;
      double delta = 0;
      for (std::size_t i = 0; i < d; ++i) delta += std::abs(next[i] - vec[i]);
      vec = next;
      if (delta < 1e-15 && it > 50) break;
    }
    return lambda;
  };
  l1 = top(cov, v1);
  std::vector<double> deflated = cov;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) deflated[i * d + j] -= l1 * v1[i] * v1[j];
  l2 = top(deflated, v2);
}

}  // namespace

TEST_CASE("pca: rank-1 data has explained variance 1 in the first component") {
  Rng rng(2);
  std::vector<double> dir{0.5, -0.3, 0.2, 0.7};
  const std::size_t n = 50;
  std::vector<double> data(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.uniform(-2, 2);
    for (std::size_t j = 0; j < 4; ++j) data[i * 4 + j] = t * dir[j];
  }
  PcaProjection p = pca_project(data, n, 4);
  REQUIRE(p.explained_variance[0] == Approx(1.0).margin(1e-12));
  REQUIRE(p.explained_variance[1] == Approx(0.0).margin(1e-12));
}

TEST_CASE("pca: isotropic 4-D cloud gives ratios near 0.25") {
  Rng rng(7);
  const std::size_t n = 100000;
  std::vector<double> data(n * 4);
  for (auto& v : data) v = rng.normal();
  PcaProjection p = pca_project(data, n, 4);
  REQUIRE(p.explained_variance[0] == Approx(0.25).margin(0.02));
  REQUIRE(p.explained_variance[1] == Approx(0.25).margin(0.02));
  REQUIRE(p.explained_variance[0] >= p.explained_variance[1]);
}

TEST_CASE("pca components are orthonormal and ratios are valid") {
  Rng rng(5);
  const std::size_t n = 500;
  std::vector<double> data(n * 4);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      data[i * 4 + j] = rng.normal(0.0, 1.0 + static_cast<double>(j));
  PcaProjection p = pca_project(data, n, 4);
  double d11 = 0, d22 = 0, d12 = 0;
  for (std::size_t j = 0; j < 4; ++j) {
    d11 += p.components[j] * p.components[j];
    d22 += p.components[4 + j] * p.components[4 + j];
    d12 += p.components[j] * p.components[4 + j];
  }
  REQUIRE(d11 == Approx(1.0).margin(1e-10));
  REQUIRE(d22 == Approx(1.0).margin(1e-10));
  REQUIRE(d12 == Approx(0.0).margin(1e-10));
  REQUIRE(p.explained_variance[0] >= p.explained_variance[1]);
  REQUIRE(p.explained_variance[0] <= 1.0);
  REQUIRE(p.explained_variance[1] >= 0.0);
}

TEST_CASE("pca matches the power-iteration oracle up to sign") {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 40 + rng.integer(100);
    std::vector<double> data(n * 4);
    for (auto& v : data) v = rng.normal(0.0, 1.0 + 0.5 * (trial % 3));
    PcaProjection p = pca_project(data, n, 4);

    // oracle covariance
    std::vector<double> mean(4, 0.0), cov(16, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < 4; ++j) mean[j] += data[i * 4 + j];
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b)
          cov[a * 4 + b] += (data[i * 4 + a] - mean[a]) * (data[i * 4 + b] - mean[b]);
    for (auto& c : cov) c /= static_cast<double>(n - 1);

    std::vector<double> v1, v2;
    double l1, l2;
    power_iteration_top2(cov, 4, v1, v2, l1, l2);
    double dot1 = 0, dot2 = 0, trace = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      dot1 += v1[j] * p.components[j];
      dot2 += v2[j] * p.components[4 + j];
      trace += cov[j * 4 + j];
    }
    INFO("trial " << trial);
    REQUIRE(std::abs(dot1) == Approx(1.0).margin(1e-8));
    REQUIRE(std::abs(dot2) == Approx(1.0).margin(1e-8));
    REQUIRE(p.explained_variance[0] == Approx(l1 / trace).margin(1e-8));
    REQUIRE(p.explained_variance[1] == Approx(l2 / trace).margin(1e-8));
  }
}

TEST_CASE("pca edge cases") {
  REQUIRE_THROWS_AS(pca_project(std::vector<double>(8, 1.0), 2, 4), std::invalid_argument);
  // zero-variance data: flagged, ratios defined as 0
  std::vector<double> flat(5 * 4, 3.25);
  PcaProjection p = pca_project(flat, 5, 4);
  REQUIRE(p.degenerate);
  REQUIRE(p.explained_variance[0] == 0.0);
  REQUIRE(p.explained_variance[1] == 0.0);
}

TEST_CASE("Eckart-Young spot check: pca beats 100 random rank-2 projections") {
  Rng rng(23);
  const std::size_t n = 300, d = 4;
  std::vector<double> data(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      data[i * d + j] = rng.normal(0.0, j == 0 ? 3.0 : (j == 1 ? 2.0 : 0.5));
  PcaProjection p = pca_project(data, n, d);

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += data[i * d + j];
  for (auto& m : mean) m /= static_cast<double>(n);

  // reconstruction error from projecting onto a rank-2 orthonormal basis
  auto recon_error = [&](const std::vector<double>& b1, const std::vector<double>& b2) {
    double err = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double c1 = 0, c2 = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const double x = data[i * d + j] - mean[j];
        c1 += x * b1[j];
        c2 += x * b2[j];
      }
      for (std::size_t j = 0; j < d; ++j) {
        const double x = data[i * d + j] - mean[j];
        const double r = c1 * b1[j] + c2 * b2[j];
        err += (x - r) * (x - r);
      }
    }
    return err;
  };
  std::vector<double> p1(p.components.begin(), p.components.begin() + d);
  std::vector<double> p2(p.components.begin() + d, p.components.end());
  const double pca_err = recon_error(p1, p2);

  for (int trial = 0; trial < 100; ++trial) {
    // random orthonormal pair via Gram-Schmidt
    std::vector<double> a(d), b(d);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    double na = 0;
    for (double v : a) na += v * v;
    na = std::sqrt(na);
    for (auto& v : a) v /= na;
    double ab = 0;
    for (std::size_t j = 0; j < d; ++j) ab += a[j] * b[j];
    for (std::size_t j = 0; j < d; ++j) b[j] -= ab * a[j];
    double nb = 0;
    for (double v : b) nb += v * v;
    nb = std::sqrt(nb);
    for (auto& v : b) v /= nb;
    REQUIRE(pca_err <= recon_error(a, b) + 1e-9);
  }
}

TEST_CASE("rmse table rows, ordering, and the zero-error model") {
  // a dataset of all-zero sequences: a zero-weight model reconstructs exactly
  Dataset ds;
  ds.num_data = 10;
  ds.seq_len = 5;
  ds.init_storage();
  for (std::size_t t = 0; t < 5; ++t) ds.times.push_back(0.1 * static_cast<double>(t));
  ds = split_dataset(std::move(ds), 1);

  LatentOdeModel model(toy_arch(), 3);
  for (std::size_t i = 0; i < model.params().size(); ++i)
    for (auto& v : model.params().tensor(i).values()) v = 0.0;
  auto rows = ds.indices_of(Split::Test);
  auto rs = per_sample_rmse_node(model, ds, rows);
  REQUIRE(mean_of(rs) == 0.0);

  const std::string path = temp_path("rmse_table.csv");
  write_rmse_table(path, {{"solar", 0.3, 0.4},
                          {"spring123", 0.2, 0.3},
                          {"spiral", 0.1, 0.2},
                          {"spring1", 0.15, 0.25}});
  const std::string text = slurp(path);
  const auto p_spiral = text.find("spiral");
  const auto p_s1 = text.find("spring1,");
  const auto p_s123 = text.find("spring123");
  const auto p_solar = text.find("solar");
  REQUIRE(p_spiral != std::string::npos);
  REQUIRE(p_spiral < p_s1);
  REQUIRE(p_s1 < p_s123);
  REQUIRE(p_s123 < p_solar);
}

TEST_CASE("eval rmse agrees with the baseline module rmse on identical inputs") {
  Dataset ds = gen_springs({SpringKind::Undamped}, 8, 4);
  auto obs = subsample(ds, 20).observed;
  obs = split_dataset(std::move(obs), 2);
  BaselineConfig bc;
  bc.hidden_size = 5;
  LstmAutoencoder model(bc, 6);
  auto rows = obs.indices_of(Split::Test);
  auto per_sample = per_sample_rmse_baseline(model, obs, rows);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto xs = make_batch(obs, {rows[k]}, obs.seq_len);
    REQUIRE(per_sample[k] == Approx(rmse(model.forward(xs), xs)).epsilon(1e-12));
  }
}

TEST_CASE("reconstruction export emits both regions and extrapolation grid rows") {
  Dataset ds = gen_springs({SpringKind::Undamped}, 6, 8);
  auto obs = subsample(ds, 12).observed;
  LatentOdeModel model(toy_arch(), 5);
  auto sample = make_batch(obs, {0}, obs.seq_len);
  // single-sample export uses unbatched tensors
  std::vector<Tensor> xs;
  for (const auto& x : sample) xs.push_back(Tensor(Shape{2}, {x(0, 0), x(0, 1)}));

  TimeGrid extrap;
  const double span = obs.times.back() - obs.times.front();
  for (int i = 0; i <= 20; ++i)
    extrap.push_back(obs.times.front() - 0.5 * span + 2.0 * span * i / 20.0);

  const std::string path = temp_path("recon.csv");
  export_reconstruction_node(path, model, xs, obs.times, extrap);
  const std::string text = slurp(path);
  REQUIRE(text.find(",observed") != std::string::npos);
  REQUIRE(text.find(",extrapolated") != std::string::npos);
  // row count: header + observed + extrapolated
  std::size_t lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  REQUIRE(lines == 1 + obs.times.size() + extrap.size());
}

TEST_CASE("baseline export has observed rows only") {
  Dataset ds = gen_springs({SpringKind::Undamped}, 6, 8);
  auto obs = subsample(ds, 10).observed;
  BaselineConfig bc;
  bc.hidden_size = 4;
  LstmAutoencoder model(bc, 2);
  std::vector<Tensor> xs;
  for (const auto& x : make_batch(obs, {1}, obs.seq_len))
    xs.push_back(Tensor(Shape{2}, {x(0, 0), x(0, 1)}));
  const std::string path = temp_path("recon_base.csv");
  export_reconstruction_baseline(path, model, xs, obs.times);
  const std::string text = slurp(path);
  REQUIRE(text.find(",observed") != std::string::npos);
  REQUIRE(text.find("extrapolated") == std::string::npos);
}

TEST_CASE("latent scatter contract") {
  Dataset ds = gen_springs({SpringKind::Undamped, SpringKind::ExpDamped}, 40, 13);
  auto obs = subsample(ds, 10).observed;
  obs = split_dataset(std::move(obs), 4);
  LatentOdeModel model(toy_arch(), 9);

  const std::string path = temp_path("latent.csv");
  PcaProjection proj = latent_scatter(path, model, obs);
  const std::string text = slurp(path);
  REQUIRE(text.find("# explained_variance,") == 0);
  REQUIRE(text.find("spring1") != std::string::npos);
  REQUIRE(text.find("spring3") != std::string::npos);
  // header total is the sum of the two ratios
  const double total = proj.explained_variance[0] + proj.explained_variance[1];
  REQUIRE(text.find(csv::fmt(total)) != std::string::npos);

  SECTION("single-class dataset keeps one label") {
    Dataset one = gen_springs({SpringKind::Undamped}, 20, 3);
    auto obs1 = subsample(one, 8).observed;
    obs1 = split_dataset(std::move(obs1), 5);
    const std::string p2 = temp_path("latent_one.csv");
    latent_scatter(p2, model, obs1);
    const std::string t2 = slurp(p2);
    REQUIRE(t2.find("spring1") != std::string::npos);
    REQUIRE(t2.find("spring3") == std::string::npos);
  }
  SECTION("unlabeled dataset is an error") {
    Dataset solar = gen_synthetic_solar(20, 2);
    solar = split_dataset(std::move(solar), 3);
    REQUIRE_THROWS_AS(latent_scatter(temp_path("x.csv"), model, solar), std::invalid_argument);
  }
}

TEST_CASE("timing report") {
  SECTION("constant durations give that constant") {
    std::vector<EpochRecord> recs{{1, 0, 0, 0.25}, {2, 0, 0, 0.25}, {3, 0, 0, 0.25}};
    REQUIRE(mean_epoch_seconds(recs) == 0.25);
  }
  SECTION("two experiments give two ordered rows") {
    const std::string path = temp_path("timing.csv");
    write_timing_csv(path, {{"spring1", 0.5, 0.7}, {"spiral", 0.3, 0.4}});
    const std::string text = slurp(path);
    REQUIRE(text.find("experiment,node_s_per_epoch,baseline_s_per_epoch") == 0);
    REQUIRE(text.find("spiral") < text.find("spring1"));
  }
  SECTION("empty log is an error") {
    REQUIRE_THROWS_AS(mean_epoch_seconds({}), std::invalid_argument);
  }
}

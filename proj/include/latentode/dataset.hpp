#ifndef LATENTODE_DATASET_HPP
#define LATENTODE_DATASET_HPP

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "latentode/ode.hpp"
#include "latentode/rng.hpp"
#include "latentode/tensor.hpp"

namespace latentode {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

// ---------------------------------------------------------------------------
// small CSV helpers; doubles are printed with 17 significant digits so that
// write/read round-trips are bit-exact
// ---------------------------------------------------------------------------

namespace csv {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw IoError(where + ": not a number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace csv

// ---------------------------------------------------------------------------
// Dataset: [num_data, seq_len, 2] with a shared time grid
// ---------------------------------------------------------------------------

enum class Split { Unassigned, Train, Val, Test };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::Unassigned: return "unassigned";
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "unassigned") return Split::Unassigned;
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw IoError("unknown split tag '" + s + "'");
}

struct Dataset {
  static constexpr std::size_t kFeatures = 2;

  std::size_t num_data = 0;
  std::size_t seq_len = 0;
  TimeGrid times;                    // shared across samples, strictly increasing
  std::vector<double> values;        // row-major [num_data][seq_len][2]
  std::vector<std::string> labels;   // per-sample tag; empty string = unlabeled
  std::vector<Split> split;

  double value(std::size_t i, std::size_t t, std::size_t f) const {
    return values[(i * seq_len + t) * kFeatures + f];
  }
  double& value(std::size_t i, std::size_t t, std::size_t f) {
    return values[(i * seq_len + t) * kFeatures + f];
  }

  bool has_labels() const {
    for (const auto& l : labels)
      if (!l.empty()) return true;
    return false;
  }

  std::vector<std::size_t> indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < num_data; ++i)
      if (split[i] == s) out.push_back(i);
    return out;
  }

  void init_storage() {
    values.assign(num_data * seq_len * kFeatures, 0.0);
    labels.assign(num_data, "");
    split.assign(num_data, Split::Unassigned);
  }
};

// sequence of [B,2] tensors for the given sample rows, first m steps
inline std::vector<Tensor> make_batch(const Dataset& ds, const std::vector<std::size_t>& rows,
                                      std::size_t m) {
  if (m == 0 || m > ds.seq_len)
    throw ShapeError("make_batch: prefix length " + std::to_string(m) + " out of range");
  std::vector<Tensor> xs;
  xs.reserve(m);
  for (std::size_t t = 0; t < m; ++t) {
    Tensor x(Shape{rows.size(), Dataset::kFeatures});
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t f = 0; f < Dataset::kFeatures; ++f)
        x(r, f) = ds.value(rows[r], t, f);
    xs.push_back(std::move(x));
  }
  return xs;
}

inline TimeGrid prefix_times(const Dataset& ds, std::size_t m) {
  if (m == 0 || m > ds.seq_len)
    throw ShapeError("prefix_times: prefix length " + std::to_string(m) + " out of range");
  return TimeGrid(ds.times.begin(), ds.times.begin() + m);
}

// ---------------------------------------------------------------------------
// spirals
// ---------------------------------------------------------------------------

// Archimedean spiral point; clockwise = counterclockwise mirrored in y
inline void spiral_xy(double a, double b, double theta, bool clockwise, double& x, double& y) {
  const double r = a + b * theta;
  x = r * std::cos(theta);
  y = (clockwise ? -1.0 : 1.0) * r * std::sin(theta);
}

inline Dataset gen_spirals(std::size_t n, std::size_t seq_len, double noise_std,
                           std::uint64_t seed) {
  if (n % 2 != 0) throw std::invalid_argument("gen_spirals: n must be even for a 50/50 split");
  if (seq_len < 2) throw std::invalid_argument("gen_spirals: seq_len must be >= 2");
  Rng rng(seed);
  Dataset ds;
  ds.num_data = n;
  ds.seq_len = seq_len;
  ds.init_storage();
  ds.times.resize(seq_len);
  for (std::size_t t = 0; t < seq_len; ++t)
    ds.times[t] = 10.0 * static_cast<double>(t) / static_cast<double>(seq_len - 1);
  const double theta_max = 6.0 * 3.14159265358979323846;
  for (std::size_t i = 0; i < n; ++i) {
    const bool clockwise = i >= n / 2;
    const double a = rng.uniform(0.3, 0.7);
    const double b = rng.uniform(0.08, 0.12);
    ds.labels[i] = clockwise ? "cw" : "ccw";
    for (std::size_t t = 0; t < seq_len; ++t) {
      const double theta = theta_max * static_cast<double>(t) / static_cast<double>(seq_len - 1);
      double x, y;
      spiral_xy(a, b, theta, clockwise, x, y);
      if (noise_std > 0) {
        x += rng.normal(0.0, noise_std);
        y += rng.normal(0.0, noise_std);
      }
      ds.value(i, t, 0) = x;
      ds.value(i, t, 1) = y;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// springs: y1 undamped, y2 linear envelope, y3 exponential envelope
// ---------------------------------------------------------------------------

enum class SpringKind : int { Undamped = 1, Damped = 2, ExpDamped = 3 };

constexpr double kSpringOmega = 2.0 * 3.14159265358979323846 / 2.5;  // fixed frequency
constexpr double kSpringTMax = 10.0;
constexpr std::size_t kSpringSteps = 300;

inline double spring_value(SpringKind kind, double amplitude, double phase, double t) {
  const double base = amplitude * std::sin(kSpringOmega * t + phase);
  switch (kind) {
    case SpringKind::Undamped: return base;
    case SpringKind::Damped: return (1.0 - t / 15.0) * base;
    case SpringKind::ExpDamped: return std::exp(-0.3 * t) * base;
  }
  throw std::invalid_argument("unknown spring kind");
}

inline std::string spring_label(SpringKind k) {
  return "spring" + std::to_string(static_cast<int>(k));
}

// Per-sample randomness enters through amplitude ~ N(1, 0.1^2) and phase
// ~ N(0, 0.5^2); the frequency stays fixed. Counts per kind are as equal as
// possible when n is not divisible by the number of kinds.
inline Dataset gen_springs(const std::vector<SpringKind>& kinds, std::size_t n,
                           std::uint64_t seed) {
  if (kinds.empty()) throw std::invalid_argument("gen_springs: no spring kinds given");
  for (std::size_t i = 0; i + 1 < kinds.size(); ++i)
    for (std::size_t j = i + 1; j < kinds.size(); ++j)
      if (kinds[i] == kinds[j]) throw std::invalid_argument("gen_springs: duplicate kind");
  if (n < kinds.size())
    throw std::invalid_argument("gen_springs: need at least one sample per kind");
  Rng rng(seed);
  Dataset ds;
  ds.num_data = n;
  ds.seq_len = kSpringSteps;
  ds.init_storage();
  ds.times.resize(kSpringSteps);
  for (std::size_t t = 0; t < kSpringSteps; ++t)
    ds.times[t] = kSpringTMax * static_cast<double>(t) / static_cast<double>(kSpringSteps - 1);
  const std::size_t base = n / kinds.size();
  const std::size_t extra = n % kinds.size();
  std::size_t row = 0;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    const std::size_t count = base + (k < extra ? 1 : 0);
    for (std::size_t s = 0; s < count; ++s, ++row) {
      const double amplitude = rng.normal(1.0, 0.1);
      const double phase = rng.normal(0.0, 0.5);
      ds.labels[row] = spring_label(kinds[k]);
      for (std::size_t t = 0; t < kSpringSteps; ++t) {
        const double tv = ds.times[t];
        ds.value(row, t, 0) = tv / kSpringTMax;  // normalized time feature
        ds.value(row, t, 1) = spring_value(kinds[k], amplitude, phase, tv);
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// subsample: contiguous prefix for training, tail kept as extrapolation truth
// ---------------------------------------------------------------------------

struct SubsampleResult {
  Dataset observed;
  Dataset tail;  // may be empty (m == seq_len)
};

inline SubsampleResult subsample(const Dataset& ds, std::size_t m) {
  if (m == 0 || m > ds.seq_len)
    throw std::invalid_argument("subsample: m=" + std::to_string(m) +
                                " out of range for seq_len=" + std::to_string(ds.seq_len));
  SubsampleResult out;
  auto cut = [&](Dataset& dst, std::size_t t0, std::size_t t1) {
    dst.num_data = ds.num_data;
    dst.seq_len = t1 - t0;
    dst.times.assign(ds.times.begin() + t0, ds.times.begin() + t1);
    dst.labels = ds.labels;
    dst.split = ds.split;
    dst.values.resize(dst.num_data * dst.seq_len * Dataset::kFeatures);
    for (std::size_t i = 0; i < ds.num_data; ++i)
      for (std::size_t t = t0; t < t1; ++t)
        for (std::size_t f = 0; f < Dataset::kFeatures; ++f)
          dst.value(i, t - t0, f) = ds.value(i, t, f);
  };
  cut(out.observed, 0, m);
  if (m < ds.seq_len) cut(out.tail, m, ds.seq_len);
  return out;
}

// ---------------------------------------------------------------------------
// solar power: real CSV ingestion and a synthetic stand-in generator
// ---------------------------------------------------------------------------

constexpr std::size_t kSolarSteps = 48;  // 30-minute intervals over a day

// header `day,t0,...,t47`, one row per day with 48 numeric power values;
// features become (time of day in [0,1], min-max normalized power)
inline Dataset load_solar_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_solar_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("load_solar_csv: empty file '" + path + "'");
  {
    auto header = csv::split_line(line);
    if (header.size() != kSolarSteps + 1 || header[0] != "day")
      throw IoError("load_solar_csv: bad header, expected day,t0,...,t47");
    for (std::size_t i = 0; i < kSolarSteps; ++i)
      if (header[i + 1] != "t" + std::to_string(i))
        throw IoError("load_solar_csv: bad header column " + std::to_string(i + 1) +
                      ", expected t" + std::to_string(i));
  }
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = csv::split_line(line);
    if (fields.size() != kSolarSteps + 1)
      throw IoError("load_solar_csv: row " + std::to_string(line_no) + ": expected " +
                    std::to_string(kSolarSteps + 1) + " fields, got " +
                    std::to_string(fields.size()));
    std::vector<double> vals(kSolarSteps);
    for (std::size_t i = 0; i < kSolarSteps; ++i)
      vals[i] = csv::parse_double(fields[i + 1], "load_solar_csv: row " + std::to_string(line_no));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw IoError("load_solar_csv: no data rows in '" + path + "'");

  double lo = rows[0][0], hi = rows[0][0];
  for (const auto& r : rows)
    for (double v : r) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double range = hi - lo;  // zero range maps everything to zero

  Dataset ds;
  ds.num_data = rows.size();
  ds.seq_len = kSolarSteps;
  ds.init_storage();
  ds.times.resize(kSolarSteps);
  for (std::size_t t = 0; t < kSolarSteps; ++t)
    ds.times[t] = static_cast<double>(t) / static_cast<double>(kSolarSteps - 1);
  for (std::size_t i = 0; i < ds.num_data; ++i)
    for (std::size_t t = 0; t < kSolarSteps; ++t) {
      ds.value(i, t, 0) = ds.times[t];
      ds.value(i, t, 1) = range > 0 ? (rows[i][t] - lo) / range : 0.0;
    }
  return ds;
}

// bell-shaped daily curves: c * max(0, sin(pi (t - rise)/(set - rise)))^2
inline Dataset gen_synthetic_solar(std::size_t days, std::uint64_t seed) {
  if (days < 1) throw std::invalid_argument("gen_synthetic_solar: days must be >= 1");
  Rng rng(seed);
  Dataset ds;
  ds.num_data = days;
  ds.seq_len = kSolarSteps;
  ds.init_storage();
  ds.times.resize(kSolarSteps);
  for (std::size_t t = 0; t < kSolarSteps; ++t)
    ds.times[t] = static_cast<double>(t) / static_cast<double>(kSolarSteps - 1);
  for (std::size_t i = 0; i < days; ++i) {
    const double c = rng.uniform(0.6, 1.0);
    const double t_rise = rng.uniform(0.2, 0.3);
    const double t_set = rng.uniform(0.7, 0.8);
    for (std::size_t t = 0; t < kSolarSteps; ++t) {
      const double tv = ds.times[t];
      double p = 0.0;
      if (tv > t_rise && tv < t_set) {
        const double s = std::sin(3.14159265358979323846 * (tv - t_rise) / (t_set - t_rise));
        p = c * s * s;
      }
      ds.value(i, t, 0) = tv;
      ds.value(i, t, 1) = p;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// 60/20/20 split, stratified by label when labels exist
// ---------------------------------------------------------------------------

inline Dataset split_dataset(Dataset ds, std::uint64_t seed) {
  if (ds.num_data < 5) throw std::invalid_argument("split: need at least 5 samples");
  Rng rng(seed);
  std::map<std::string, std::vector<std::size_t>> groups;
  if (ds.has_labels()) {
    for (std::size_t i = 0; i < ds.num_data; ++i) groups[ds.labels[i]].push_back(i);
  } else {
    for (std::size_t i = 0; i < ds.num_data; ++i) groups[""].push_back(i);
  }
  // cumulative quotas: global counts land exactly on round(0.6 N)/round(0.2 N)
  // while every label stays within one sample of its own 60/20/20
  auto quota = [](double frac, std::size_t cum_before, std::size_t cum_after) {
    return static_cast<std::size_t>(std::llround(frac * static_cast<double>(cum_after)) -
                                    std::llround(frac * static_cast<double>(cum_before)));
  };
  std::size_t cum = 0;
  for (auto& [label, idx] : groups) {
    rng.shuffle(idx);
    const std::size_t g = idx.size();
    const std::size_t n_train = quota(0.6, cum, cum + g);
    const std::size_t n_val = quota(0.2, cum, cum + g);
    cum += g;
    for (std::size_t k = 0; k < g; ++k) {
      Split s = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
      ds.split[idx[k]] = s;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// portable CSV bundle: meta.csv + times.csv + values.csv
// ---------------------------------------------------------------------------

inline void save_bundle(const Dataset& ds, const std::string& dir) {
  {
    std::ofstream meta(dir + "/meta.csv");
    if (!meta) throw IoError("save_bundle: cannot write '" + dir + "/meta.csv'");
    meta << "num_data," << ds.num_data << "\n";
    meta << "seq_len," << ds.seq_len << "\n";
    meta << "sample,label,split\n";
    for (std::size_t i = 0; i < ds.num_data; ++i)
      meta << i << "," << ds.labels[i] << "," << split_name(ds.split[i]) << "\n";
  }
  {
    std::ofstream times(dir + "/times.csv");
    if (!times) throw IoError("save_bundle: cannot write '" + dir + "/times.csv'");
    for (double t : ds.times) times << csv::fmt(t) << "\n";
  }
  {
    std::ofstream values(dir + "/values.csv");
    if (!values) throw IoError("save_bundle: cannot write '" + dir + "/values.csv'");
    for (std::size_t i = 0; i < ds.num_data; ++i) {
      for (std::size_t k = 0; k < ds.seq_len * Dataset::kFeatures; ++k) {
        if (k) values << ",";
        values << csv::fmt(ds.values[i * ds.seq_len * Dataset::kFeatures + k]);
      }
      values << "\n";
    }
  }
}

inline Dataset load_bundle(const std::string& dir) {
  Dataset ds;
  {
    std::ifstream meta(dir + "/meta.csv");
    if (!meta) throw IoError("load_bundle: cannot open '" + dir + "/meta.csv'");
    std::string line;
    auto expect_kv = [&](const std::string& key) -> std::size_t {
      if (!std::getline(meta, line)) throw IoError("load_bundle: truncated meta.csv");
      auto f = csv::split_line(line);
      if (f.size() != 2 || f[0] != key)
        throw IoError("load_bundle: meta.csv: expected '" + key + ",<n>'");
      return static_cast<std::size_t>(std::stoull(f[1]));
    };
    ds.num_data = expect_kv("num_data");
    ds.seq_len = expect_kv("seq_len");
    if (!std::getline(meta, line) || line != "sample,label,split")
      throw IoError("load_bundle: meta.csv: missing sample header");
    ds.init_storage();
    for (std::size_t i = 0; i < ds.num_data; ++i) {
      if (!std::getline(meta, line)) throw IoError("load_bundle: meta.csv: truncated samples");
      auto f = csv::split_line(line);
      if (f.size() != 3) throw IoError("load_bundle: meta.csv: bad sample row " + std::to_string(i));
      ds.labels[i] = f[1];
      ds.split[i] = parse_split(f[2]);
    }
  }
  {
    std::ifstream times(dir + "/times.csv");
    if (!times) throw IoError("load_bundle: cannot open '" + dir + "/times.csv'");
    std::string line;
    while (std::getline(times, line))
      if (!line.empty()) ds.times.push_back(csv::parse_double(line, "load_bundle: times.csv"));
    if (ds.times.size() != ds.seq_len)
      throw IoError("load_bundle: times.csv has " + std::to_string(ds.times.size()) +
                    " entries, expected " + std::to_string(ds.seq_len));
  }
  {
    std::ifstream values(dir + "/values.csv");
    if (!values) throw IoError("load_bundle: cannot open '" + dir + "/values.csv'");
    std::string line;
    std::size_t row = 0;
    const std::size_t row_len = ds.seq_len * Dataset::kFeatures;
    while (std::getline(values, line)) {
      if (line.empty()) continue;
      if (row >= ds.num_data) throw IoError("load_bundle: values.csv has extra rows");
      auto f = csv::split_line(line);
      if (f.size() != row_len)
        throw IoError("load_bundle: values.csv row " + std::to_string(row) + " has " +
                      std::to_string(f.size()) + " fields, expected " + std::to_string(row_len));
      for (std::size_t k = 0; k < row_len; ++k)
        ds.values[row * row_len + k] =
            csv::parse_double(f[k], "load_bundle: values.csv row " + std::to_string(row));
      ++row;
    }
    if (row != ds.num_data)
      throw IoError("load_bundle: values.csv has " + std::to_string(row) + " rows, expected " +
                    std::to_string(ds.num_data));
  }
  return ds;
}

}  // namespace latentode

#endif  // LATENTODE_DATASET_HPP

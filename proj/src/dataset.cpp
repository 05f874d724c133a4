#include "shnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "shnn/error.hpp"
#include "shnn/format.hpp"
#include "shnn/integrators.hpp"

namespace shnn {

namespace {

constexpr const char* kDatasetFormat = "shnn-dataset/1";

std::mt19937_64 sample_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

PhaseVector draw_uniform(const Box& box, std::mt19937_64& rng) {
  PhaseVector y(box.dim());
  for (Eigen::Index i = 0; i < box.dim(); ++i) {
    std::uniform_real_distribution<double> dist(box.lower(i), box.upper(i));
    y(i) = dist(rng);
  }
  return y;
}

[[noreturn]] void fail_at(long line, const std::string& what) {
  throw FormatError("dataset line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<DataPair> Dataset::subset(Split which) const {
  std::vector<DataPair> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (split[i] == which) out.push_back(pairs[i]);
  }
  return out;
}

std::vector<int> Dataset::indices(Split which) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (split[i] == which) out.push_back(static_cast<int>(i));
  }
  return out;
}

int test_split_size(int k) {
  return std::max(1, static_cast<int>(std::lround(0.2 * k)));
}

Dataset generate_dataset(const HamiltonianSystem& system, double h, int k,
                         std::uint64_t seed, GenerateOptions opts) {
  if (k < 5) throw InvalidArgument("a dataset needs at least 5 pairs");
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("time step must be positive");

  Dataset ds;
  ds.system = system.id;
  ds.n = system.n;
  ds.h = h;
  ds.seed = seed;
  ds.tolerance = opts.tolerance;
  ds.pairs.resize(static_cast<std::size_t>(k));

  const VectorField field = [&system](const PhaseVector& y) { return system.vector_field(y); };
  const Rk45Options rk{opts.tolerance, opts.tolerance};
  const int max_failures = k / 100;
  int failures = 0;
  for (int i = 0; i < k; ++i) {
    auto rng = sample_stream(seed, static_cast<std::uint64_t>(i));
    for (;;) {
      PhaseVector y0 = draw_uniform(system.data_region, rng);
      try {
        PhaseVector y1 = rk45_flow(field, y0, h, rk);
        ds.pairs[static_cast<std::size_t>(i)] = {std::move(y0), std::move(y1)};
        break;
      } catch (const IntegrationFailure& e) {
        ++failures;
        std::clog << "warning: sample " << i << " failed to integrate (" << e.what()
                  << "); resampling\n";
        if (failures > max_failures) {
          throw IntegrationFailure("more than 1% of samples failed to integrate");
        }
      }
    }
  }

  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(seed);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  ds.split.assign(static_cast<std::size_t>(k), Split::Train);
  const int n_test = test_split_size(k);
  for (int j = 0; j < n_test; ++j) ds.split[static_cast<std::size_t>(order[j])] = Split::Test;
  return ds;
}

void write_dataset(std::ostream& os, const Dataset& ds) {
  nlohmann::ordered_json header;
  header["format"] = kDatasetFormat;
  header["system"] = ds.system;
  header["n"] = ds.n;
  header["h"] = ds.h;
  header["K"] = ds.size();
  header["seed"] = ds.seed;
  header["tolerance"] = ds.tolerance;
  os << header.dump() << '\n';

  os << "split_flag";
  for (const char* block : {"p0", "q0", "p1", "q1"}) {
    for (int i = 1; i <= ds.n; ++i) os << ',' << block << '_' << i;
  }
  os << '\n';
  for (std::size_t r = 0; r < ds.pairs.size(); ++r) {
    os << static_cast<int>(ds.split[r]);
    for (const PhaseVector* y : {&ds.pairs[r].y0, &ds.pairs[r].y1}) {
      for (Eigen::Index i = 0; i < y->size(); ++i) os << ',' << fmt_double((*y)(i));
    }
    os << '\n';
  }
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset(out, ds);
  if (!out) throw IoError("failed writing " + path.string());
}

Dataset read_dataset(std::istream& is, std::optional<double> expected_h) {
  std::string line;
  long line_no = 1;
  if (!std::getline(is, line) || line.empty()) fail_at(1, "missing JSON header (empty file?)");

  Dataset ds;
  long k_declared = 0;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", std::string()) != kDatasetFormat) {
      fail_at(1, "unknown format tag");
    }
    ds.system = header.at("system").get<std::string>();
    ds.n = header.at("n").get<int>();
    ds.h = header.at("h").get<double>();
    ds.seed = header.at("seed").get<std::uint64_t>();
    ds.tolerance = header.at("tolerance").get<double>();
    k_declared = header.at("K").get<long>();
  } catch (const nlohmann::json::exception& e) {
    fail_at(1, std::string("malformed header: ") + e.what());
  }
  if (ds.n < 1 || !(ds.h > 0.0) || k_declared < 0) fail_at(1, "invalid header values");
  try {
    if (system_by_id(ds.system).n != ds.n) fail_at(1, "n does not match system");
  } catch (const InvalidArgument& e) {
    fail_at(1, e.what());
  }
  if (expected_h && std::abs(*expected_h - ds.h) > 1e-12 * std::max(1.0, std::abs(ds.h))) {
    throw InvalidArgument("time step conflict: dataset header has h=" + fmt_double(ds.h) +
                          " but h=" + fmt_double(*expected_h) + " was requested");
  }

  ++line_no;
  if (!std::getline(is, line)) fail_at(line_no, "missing column header");
  if (line.rfind("split_flag", 0) != 0) fail_at(line_no, "unexpected column header");

  const int dim = 2 * ds.n;
  const std::size_t expected_cols = 1 + 2 * static_cast<std::size_t>(dim);
  std::vector<double> row;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != expected_cols) {
      fail_at(line_no, "expected " + std::to_string(expected_cols) + " columns, found " +
                           std::to_string(fields.size()));
    }
    Split flag;
    if (fields[0] == "0") {
      flag = Split::Train;
    } else if (fields[0] == "1") {
      flag = Split::Test;
    } else {
      fail_at(line_no, "split flag must be 0 or 1");
    }
    row.resize(expected_cols - 1);
    for (std::size_t c = 1; c < expected_cols; ++c) {
      if (!parse_double(fields[c], row[c - 1])) {
        fail_at(line_no, "cannot parse number in column " + std::to_string(c + 1));
      }
      if (!std::isfinite(row[c - 1])) fail_at(line_no, "non-finite value");
    }
    DataPair pair{Eigen::Map<const Eigen::VectorXd>(row.data(), dim),
                  Eigen::Map<const Eigen::VectorXd>(row.data() + dim, dim)};
    ds.pairs.push_back(std::move(pair));
    ds.split.push_back(flag);
  }
  if (ds.pairs.empty()) fail_at(line_no, "dataset has no rows");
  if (static_cast<long>(ds.pairs.size()) != k_declared) {
    fail_at(line_no, "header declares K=" + std::to_string(k_declared) + " but file has " +
                         std::to_string(ds.pairs.size()) + " rows");
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<double> expected_h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_dataset(in, expected_h);
}

}  // namespace shnn

#include "fsca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "fsca/errors.hpp"
#include "fsca/rng.hpp"

namespace fsca {

CountErrors eval_mae_mse(const std::vector<double>& predicted, const std::vector<double>& truth) {
  if (predicted.empty() || truth.empty()) throw InputError("eval_mae_mse: empty count list");
  if (predicted.size() != truth.size()) {
    throw InputError("eval_mae_mse: " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(truth.size()) + " ground-truth counts");
  }
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double e = predicted[i] - truth[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(predicted.size());
  CountErrors out{abs_sum / n, std::sqrt(sq_sum / n)};
  // Rounding can leave the root a hair below the mean for equal residuals.
  out.mse = std::max(out.mse, out.mae);
  return out;
}

std::string feature_table_csv(const FeatureTable& table) {
  std::string out = "sample_id,domain";
  for (std::size_t d = 0; d < table.dim(); ++d) out += ",dim_" + std::to_string(d);
  out += '\n';
  char buf[64];
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += table.ids[i];
    out += ',' + std::to_string(table.domains[i]);
    for (double v : table.rows[i]) {
      std::snprintf(buf, sizeof buf, ",%.9g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string(), "cannot open file for writing");
  const std::string text = feature_table_csv(table);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FormatError(path.string(), "write failed");
}

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "cannot open file");
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,domain", 0) != 0) {
    throw FormatError(path.string(), "missing 'sample_id,domain,...' header");
  }
  const auto dims = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
  FeatureTable t;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != dims + 2) {
      throw FormatError(path.string(), "line " + std::to_string(line_no) + ": expected " +
                                           std::to_string(dims + 2) + " fields");
    }
    try {
      t.ids.push_back(cells[0]);
      t.domains.push_back(std::stoi(cells[1]));
      std::vector<double> row(dims);
      for (std::size_t d = 0; d < dims; ++d) row[d] = std::stod(cells[d + 2]);
      t.rows.push_back(std::move(row));
    } catch (const std::logic_error&) {
      throw FormatError(path.string(), "line " + std::to_string(line_no) + ": not a number");
    }
  }
  return t;
}

double domain_probe(const FeatureTable& table, const ProbeOptions& options) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < table.size(); ++i) by_class[table.domains[i]].push_back(i);
  if (by_class.size() < 2) throw InputError("domain_probe: need samples from at least two domains");
  const std::size_t dim = table.dim();
  for (const auto& row : table.rows) {
    if (row.size() != dim) throw InputError("domain_probe: ragged feature rows");
  }

  // Stratified split.
  Rng rng(options.seed);
  std::vector<std::size_t> train, test;
  std::map<int, std::size_t> label;
  for (auto& [cls, idx] : by_class) {
    label[cls] = label.size();
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    auto n_train = static_cast<std::size_t>(std::round(options.train_fraction * idx.size()));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() > 1 ? idx.size() - 1 : 1);
    train.insert(train.end(), idx.begin(), idx.begin() + n_train);
    test.insert(test.end(), idx.begin() + n_train, idx.end());
  }
  if (test.empty()) throw InputError("domain_probe: not enough samples for a held-out split");
  const std::size_t k = label.size();

  // Standardise with training statistics.
  std::vector<double> mu(dim, 0.0), sd(dim, 0.0);
  for (auto i : train) {
    for (std::size_t d = 0; d < dim; ++d) mu[d] += table.rows[i][d];
  }
  for (auto& m : mu) m /= static_cast<double>(train.size());
  for (auto i : train) {
    for (std::size_t d = 0; d < dim; ++d) sd[d] += std::pow(table.rows[i][d] - mu[d], 2);
  }
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(train.size()));
  auto feature = [&](std::size_t i, std::size_t d) {
    return sd[d] > 1e-12 ? (table.rows[i][d] - mu[d]) / sd[d] : 0.0;
  };

  // Full-batch gradient descent on the softmax cross-entropy.
  std::vector<double> w(k * dim, 0.0), b(k, 0.0), logits(k);
  std::vector<double> gw(k * dim), gb(k);
  auto scores = [&](std::size_t i) {
    for (std::size_t c = 0; c < k; ++c) {
      double s = b[c];
      for (std::size_t d = 0; d < dim; ++d) s += w[c * dim + d] * feature(i, d);
      logits[c] = s;
    }
  };
  const double inv_n = 1.0 / static_cast<double>(train.size());
  for (std::size_t it = 0; it < options.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (auto i : train) {
      scores(i);
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (auto& l : logits) z += (l = std::exp(l - mx));
      const std::size_t y = label[table.domains[i]];
      for (std::size_t c = 0; c < k; ++c) {
        const double g = logits[c] / z - (c == y ? 1.0 : 0.0);
        gb[c] += g * inv_n;
        for (std::size_t d = 0; d < dim; ++d) gw[c * dim + d] += g * feature(i, d) * inv_n;
      }
    }
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= options.learning_rate * (gw[j] + options.l2 * w[j]);
    for (std::size_t c = 0; c < k; ++c) b[c] -= options.learning_rate * gb[c];
  }

  std::size_t correct = 0;
  for (auto i : test) {
    scores(i);
    const auto best = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (best == label[table.domains[i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace fsca

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fsca {

struct CountErrors {
  double mae = 0.0;
  double mse = 0.0;  // root of the mean squared error, the usual crowd-counting convention
};

/// Throws InputError for empty or unequal-length inputs.
CountErrors eval_mae_mse(const std::vector<double>& predicted, const std::vector<double>& truth);

/// Pooled latents, one row per sample.
struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<int> domains;
  std::vector<std::vector<double>> rows;

  std::size_t size() const { return rows.size(); }
  std::size_t dim() const { return rows.empty() ? 0 : rows.front().size(); }
};

/// CSV with header `sample_id,domain,dim_0,...`; values printed with %.9g.
std::string feature_table_csv(const FeatureTable& table);
void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table);
/// FormatError naming the file on malformed content.
FeatureTable read_feature_csv(const std::filesystem::path& path);

struct ProbeOptions {
  double train_fraction = 0.8;  // per domain, so every class appears in both parts
  std::size_t iterations = 400;
  double learning_rate = 0.1;
  double l2 = 1e-3;
  std::uint64_t seed = 0;
};

/// Multinomial logistic regression predicting the domain id from standardised
/// features; returns held-out accuracy. InputError if fewer than two domains.
double domain_probe(const FeatureTable& table, const ProbeOptions& options = {});

}  // namespace fsca

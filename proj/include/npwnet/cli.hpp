#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "npwnet/modelsel.hpp"
#include "npwnet/netcore.hpp"
#include "npwnet/simgen.hpp"
#include "npwnet/varem.hpp"

namespace npwnet::cli {

// ---- file formats -------------------------------------------------------
// edges.csv   header "i,j,w", 0-based node indices, LF line endings
// labels.csv  header "node,cluster"
// density CSV header "w,log_f,f", one row per grid point
// all floating point fields carry 17 significant digits

void write_edges_csv(const std::string& path, const WeightedNetwork& net);

//! Reads an edge list; node count is max index + 1 unless n_override
//! is given. Malformed rows raise MalformedEdgeList with the line number.
WeightedNetwork read_edges_csv(const std::string& path, int n_override = -1);

void write_labels_csv(const std::string& path, const Labels& labels);
Labels read_labels_csv(const std::string& path);

void write_density_csv(const std::string& path, const DensityEstimate& est);
DensityEstimate read_density_csv(const std::string& path);

void write_truth_json(const std::string& path, const GeneratorConfig& cfg);
GeneratorConfig read_truth_json(const std::string& path);

void write_fit_json(const std::string& path, const FitResult& result,
                    const FitConfig& config);

// ---- commands -----------------------------------------------------------

struct SimulateOptions {
  GeneratorConfig gen;
  std::string out_dir;
};

//! Writes edges.csv, labels.csv and truth.json; bit-reproducible per seed.
int cmd_simulate(const SimulateOptions& opts);

struct FitOptions {
  std::string edges_path;
  int n_override{-1};
  FitConfig fit;
  std::string out_dir;
};

//! Runs the EM fit and writes fit.json, assignments.csv and per-block
//! density CSVs. Returns 0 on convergence, 2 otherwise.
int cmd_fit(const FitOptions& opts);

struct SelectOptions {
  std::string edges_path;
  int n_override{-1};
  FitConfig fit;
  std::vector<int> k_range;
  std::string out_dir;
};

//! K sweep by the modified ICL criterion; writes icl.csv and icl.json and
//! prints the selected K.
int cmd_select(const SelectOptions& opts);

struct EvalOptions {
  std::string fit_path;
  std::string edges_path;
  int n_override{-1};
  std::string truth_path;        // truth.json; may be empty
  std::string truth_labels_path; // labels.csv; may be empty
  std::string out_dir;
};

//! Writes metrics.json and metrics.csv: log Rand index and log RASE when
//! truth labels / parameters are given, per-block density KS when both the
//! fitted densities and a parametric truth are available, and descriptive
//! weight statistics always.
int cmd_eval(const EvalOptions& opts);

struct BenchOptions {
  GeneratorConfig gen;
  FitConfig fit;
  int replicates{20};
  std::uint64_t base_seed{0};
  std::vector<std::string> modes{"nonparametric", "binary", "oracle"};
  std::string out_dir;
};

//! Simulate -> fit (one run per mode) -> evaluate, repeated over seeded
//! replicates; writes long-format bench.csv with columns
//! replicate,mode,metric,value. Per-replicate failures are recorded as
//! metric "failed" and the run continues.
int cmd_bench(const BenchOptions& opts);

} // namespace npwnet::cli

#pragma once

// The run-spec file: one JSON document carrying the dataset location, the
// training configuration, probing options and augmentation settings. Unknown
// keys are rejected, and every default is materialized back out so archived
// copies fully determine a run.

#include "trident/eval.hpp"
#include "trident/train.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace trident {

struct RunSpec {
  std::string dataset_root;
  std::string output_dir = "out";
  std::string topology_name = "trident";  // trident | siamese-priv | siamese-unpriv
  std::string loss_name = "vicreg";       // vicreg | infonce
  std::string mode_name = "ssl";          // ssl | supervised | gene-regression
  char supervised_task = 'a';

  SyntheticConfig synthetic;
  TrainRunConfig train;
  ProbeConfig probe;
  std::vector<double> probe_fractions = {1.0, 0.5, 0.2, 0.1, 0.05, 0.01, 0.002};

  /// Applies topology_name/loss_name/mode_name onto train.* fields.
  void resolve();
};

BranchTopology topology_by_name(const std::string& name);
LossFamily loss_by_name(const std::string& name);

RunSpec parse_run_spec(const nlohmann::json& doc);
nlohmann::json run_spec_to_json(const RunSpec& spec);

RunSpec load_run_spec(const std::string& path);
/// Writes the fully resolved spec (all defaults materialized).
void archive_run_spec(const RunSpec& spec, const std::string& path);

}  // namespace trident

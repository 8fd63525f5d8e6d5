#ifndef HMMVT_IO_HPP
#define HMMVT_IO_HPP

#include "hmmvt/hmm.hpp"
#include "hmmvt/inference.hpp"
#include "hmmvt/scenario.hpp"
#include "hmmvt/unambiguous.hpp"
#include "hmmvt/zeta.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmmvt {

/// Missing, unreadable or malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// TOML model file: `L`, `M`, `transition` (L rows, row s holds p(s | s')
/// for s' = 1..L) and `emission` (M rows, row x holds pi(x | s)).
HmmModel read_model_toml(const std::string& path, MixingPolicy policy = MixingPolicy::reject);

/// TOML scenario file: `p1`, `p2`, `q1`, `r1`, or a general unambiguous
/// model given by `transition` with optional `L` and `epsilon`.
struct ScenarioConfig {
  std::optional<ScenarioParams> params;  // set for the three-state scenario
  UnambiguousHmm model;
};

ScenarioConfig read_scenario_toml(const std::string& path);

/// One 1-based label per line; returned zero-based.
std::vector<int> read_sequence(const std::string& path);
void write_sequence(const std::string& path, const std::vector<int>& labels);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);
void write_orbit_csv(const std::string& path, const std::vector<OrbitDiagnostic>& rows);

nlohmann::json to_json(const ScenarioParams& params);
nlohmann::json to_json(const ScenarioStats& stats);
nlohmann::json to_json(const VtFixedPoint& point);
nlohmann::json to_json(const Matrix& matrix);

void write_json(const std::string& path, const nlohmann::json& value);
void write_text(const std::string& path, const std::string& text);

/// Round-trippable decimal form of a double.
std::string format_double(double value);

}  // namespace hmmvt

#endif  // HMMVT_IO_HPP

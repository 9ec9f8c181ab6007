#pragma once

// JSON case and scenario files. The grammar is documented in
// docs/file-format.md and docs/case.schema.json / docs/scenario.schema.json.

#include "tdcosim/orchestrator.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tdcosim {

/// Scenario matrix for the benchmark runner.
struct BenchMatrix {
    std::vector<InterfaceModelKind> ims;
    std::vector<SchemeKind> iss;
    std::vector<double> betas{0.0, 0.10, 0.20};
    int timing_reps = 5;
    InterfaceModelKind reference_im = InterfaceModelKind::IM7;
    SchemeKind reference_is = SchemeKind::IS6;
};

struct ScenarioFile {
    Scenario scenario;
    std::filesystem::path case_path;     ///< resolved against the scenario file's directory
    std::optional<BenchMatrix> matrix;
};

/// Throw IoError when the file cannot be read and ValidationError when the
/// content does not follow the grammar.
CoSimCase load_case(const std::filesystem::path& path);
CoSimCase parse_case(const std::string& text);
ScenarioFile load_scenario(const std::filesystem::path& path);
ScenarioFile parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {});

/// "im7-is6" style pair.
std::pair<InterfaceModelKind, SchemeKind> parse_reference(const std::string& text);

}  // namespace tdcosim

#pragma once

#include <optional>
#include <string>

#include "mtfqi/ensemble.hpp"
#include "mtfqi/features.hpp"
#include "mtfqi/solver.hpp"

namespace mtfqi {

// Versioned ensemble document; an encoder class may travel embedded in it.
// Doubles are written as shortest round-trip decimals, so save/load is
// lossless to full precision.
std::string ensemble_to_json(const TaskEnsemble& ensemble,
                             const EncoderClass* encoders = nullptr);
void save_ensemble(const TaskEnsemble& ensemble, const std::string& path,
                   const EncoderClass* encoders = nullptr);

struct LoadedEnsemble {
  TaskEnsemble ensemble;
  std::optional<EncoderClass> encoders;
};
LoadedEnsemble load_ensemble(const std::string& path);

// FNV-1a over the canonical ensemble document (without any embedded encoder
// class); ties dataset files to the ensemble that produced them.
std::string ensemble_hash(const TaskEnsemble& ensemble);

void save_model(const LearnedModel& model, const FitReport& report,
                const std::string& path);

struct LoadedModel {
  LearnedModel model;
  FitReport report;
};
LoadedModel load_model(const std::string& path);

}  // namespace mtfqi

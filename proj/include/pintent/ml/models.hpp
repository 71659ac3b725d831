#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pintent/ml/classifier.hpp"
#include "pintent/ml/forest.hpp"
#include "pintent/ml/knn.hpp"
#include "pintent/ml/linear.hpp"
#include "pintent/ml/mlp.hpp"

namespace pintent::ml {

inline std::unique_ptr<Classifier> make_classifier(const TrainConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::LR: return std::make_unique<LogisticRegression>(cfg);
    case ModelKind::KNN: return std::make_unique<Knn>(cfg);
    case ModelKind::SVM: return std::make_unique<LinearSvm>(cfg);
    case ModelKind::RF: return std::make_unique<RandomForest>(cfg);
    case ModelKind::GBDT: return std::make_unique<GradientBoosting>(cfg);
    case ModelKind::MLP: return std::make_unique<Mlp>(cfg);
  }
  throw Error(Errc::InvalidConfig, "unknown model kind");
}

inline std::unique_ptr<Classifier> fit(const Matrix& X, const Labels& y, const TrainConfig& cfg) {
  auto m = make_classifier(cfg);
  m->fit(X, y);
  return m;
}

/// Versioned artifact: kind, hyperparameters, feature names and parameters.
inline nlohmann::json save_model(const Classifier& m, const std::vector<std::string>& feature_names = {}) {
  return {{"format_version", kFormatVersion},
          {"kind", to_string(m.kind())},
          {"dimension", m.dimension()},
          {"hyperparameters", m.config().hyperparameters()},
          {"feature_names", feature_names},
          {"params", m.params()}};
}

inline std::unique_ptr<Classifier> load_model(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw Error(Errc::VersionMismatch, "model format " + std::to_string(version) + ", expected " +
                                             std::to_string(kFormatVersion));
    }
    const auto kind = parse_enum_or_throw<ModelKind>(j.at("kind").get<std::string>());
    auto m = make_classifier(TrainConfig::from_hyperparameters(kind, j.at("hyperparameters")));
    m->load_params(j.at("params"));
    m->set_dimension(j.at("dimension").get<std::size_t>());
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::MalformedLine, std::string("model artifact: ") + ex.what());
  }
}

}  // namespace pintent::ml

#include "msmkit/working_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace msmkit {

LinkKind parse_link(const std::string& name) {
  if (name == "logistic") return LinkKind::Logistic;
  if (name == "identity") return LinkKind::Identity;
  if (name == "log") return LinkKind::Log;
  throw ContractError("unsupported link '" + name +
                      "' (supported: logistic, identity, log)");
}

std::string link_name(LinkKind link) {
  switch (link) {
    case LinkKind::Logistic: return "logistic";
    case LinkKind::Identity: return "identity";
    case LinkKind::Log: return "log";
  }
  return "?";
}

double link_value(LinkKind link, double x) {
  switch (link) {
    case LinkKind::Logistic: {
      const double z = std::clamp(x, -kLinearPredictorClamp, kLinearPredictorClamp);
      return 1.0 / (1.0 + std::exp(-z));
    }
    case LinkKind::Identity:
      return x;
    case LinkKind::Log: {
      const double z = std::clamp(x, -kLinearPredictorClamp, kLinearPredictorClamp);
      return std::exp(z);
    }
  }
  return 0.0;
}

double link_slope(LinkKind link, double x) {
  switch (link) {
    case LinkKind::Logistic: {
      const double m = link_value(link, x);
      return m * (1.0 - m);
    }
    case LinkKind::Identity:
      return 1.0;
    case LinkKind::Log:
      return link_value(link, x);
  }
  return 0.0;
}

double canonical_loss(LinkKind link, double theta, double m) {
  switch (link) {
    case LinkKind::Logistic: {
      const double p = std::clamp(m, 1e-300, 1.0 - 1e-16);
      return -theta * std::log(p) - (1.0 - theta) * std::log(1.0 - p);
    }
    case LinkKind::Identity:
      return 0.5 * (theta - m) * (theta - m);
    case LinkKind::Log: {
      const double p = std::max(m, 1e-300);
      return -theta * std::log(p) + p;
    }
  }
  return 0.0;
}

FeatureMap::FeatureMap(std::vector<FeatureTerm> terms, int tau)
    : terms_(std::move(terms)), tau_(tau) {
  if (terms_.empty()) throw ContractError("feature map needs >= 1 term");
  if (tau_ < 1) throw ContractError("feature map: tau must be >= 1");
}

Eigen::VectorXd FeatureMap::eval(const std::vector<int>& treatments,
                                 const Eigen::VectorXd& baseline) const {
  if (static_cast<int>(treatments.size()) != tau_) {
    throw ContractError("feature map: treatment path length != tau");
  }
  Eigen::VectorXd out(dim());
  double sum_a = 0.0;
  for (int a : treatments) sum_a += a;
  for (int k = 0; k < dim(); ++k) {
    double value = 1.0;
    for (const auto& f : terms_[k].factors) {
      switch (f.kind) {
        case FeatureFactor::Kind::Intercept:
          break;
        case FeatureFactor::Kind::SumTreatment:
          value *= sum_a;
          break;
        case FeatureFactor::Kind::MeanTreatment:
          value *= sum_a / static_cast<double>(tau_);
          break;
        case FeatureFactor::Kind::TreatmentAt:
          value *= treatments.at(f.index - 1);
          break;
        case FeatureFactor::Kind::Baseline:
          if (f.index >= baseline.size()) {
            throw ContractError("feature map: baseline index out of range");
          }
          value *= baseline(f.index);
          break;
      }
    }
    out(k) = value;
  }
  return out;
}

std::string FeatureMap::describe() const {
  std::ostringstream os;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    if (k) os << ", ";
    os << terms_[k].label;
  }
  return os.str();
}

namespace {

std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

FeatureFactor parse_factor(const std::string& raw, int tau,
                           const std::vector<std::string>& baseline_names) {
  const std::string s = strip(raw);
  FeatureFactor f;
  if (s == "intercept" || s == "1") {
    f.kind = FeatureFactor::Kind::Intercept;
    return f;
  }
  if (s == "sum_treatment") {
    f.kind = FeatureFactor::Kind::SumTreatment;
    return f;
  }
  if (s == "mean_treatment") {
    f.kind = FeatureFactor::Kind::MeanTreatment;
    return f;
  }
  if (s.rfind("treatment[", 0) == 0 && s.back() == ']') {
    f.kind = FeatureFactor::Kind::TreatmentAt;
    f.index = std::stoi(s.substr(10, s.size() - 11));
    if (f.index < 1 || f.index > tau) {
      throw ContractError("feature map: treatment[" + std::to_string(f.index) +
                          "] out of range for tau=" + std::to_string(tau));
    }
    return f;
  }
  if (s.rfind("baseline:", 0) == 0) {
    const std::string name = strip(s.substr(9));
    auto it = std::find(baseline_names.begin(), baseline_names.end(), name);
    if (it == baseline_names.end()) {
      throw ContractError("feature map: unknown baseline column '" + name + "'");
    }
    f.kind = FeatureFactor::Kind::Baseline;
    f.index = static_cast<int>(it - baseline_names.begin());
    return f;
  }
  throw ContractError("feature map: cannot parse factor '" + s + "'");
}

}  // namespace

FeatureMap FeatureMap::parse(const std::string& text, int tau,
                             const std::vector<std::string>& baseline_names) {
  std::vector<FeatureTerm> terms;
  std::stringstream ss(text);
  std::string piece;
  while (std::getline(ss, piece, ',')) {
    const std::string term_text = strip(piece);
    if (term_text.empty()) continue;
    if (term_text == "per_time_treatment") {
      for (int t = 1; t <= tau; ++t) {
        FeatureTerm term;
        term.factors.push_back(
            parse_factor("treatment[" + std::to_string(t) + "]", tau, baseline_names));
        term.label = "treatment[" + std::to_string(t) + "]";
        terms.push_back(std::move(term));
      }
      continue;
    }
    FeatureTerm term;
    term.label = term_text;
    std::stringstream fs(term_text);
    std::string factor_text;
    while (std::getline(fs, factor_text, '*')) {
      term.factors.push_back(parse_factor(factor_text, tau, baseline_names));
    }
    terms.push_back(std::move(term));
  }
  return FeatureMap(std::move(terms), tau);
}

FeatureMap FeatureMap::intercept_sum(int tau) {
  return parse("intercept, sum_treatment", tau, {});
}

FeatureMap FeatureMap::intercept_mean(int tau) {
  return parse("intercept, mean_treatment", tau, {});
}

Eigen::VectorXd WorkingModel::phi_observed(const TrajectoryDataset& ds, int i) const {
  std::vector<int> a(ds.tau());
  for (int t = 1; t <= ds.tau(); ++t) a[t - 1] = ds.treatment(i, t);
  return phi(a, ds.baseline(i));
}

}  // namespace msmkit

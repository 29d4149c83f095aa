#include "msmkit/inference.hpp"

#include <cmath>

namespace msmkit {

double normal_quantile(double p) {
  // Wichura (1988), algorithm AS241 PPND7/PPND16 hybrid.
  if (!(p > 0.0 && p < 1.0)) throw ContractError("normal_quantile: p in (0,1) required");
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545703 * r + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
                  0.24178072517745061177) * r + 1.27045825245236838258) * r +
                3.64784832476320460504) * r + 5.7694972214606914055) * r +
              4.6303378461565452959) * r + 1.42343711074968357734) /
            (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
                  0.0151986665636164571966) * r + 0.14810397642748007459) * r +
                0.68976733498510000455) * r + 1.6763848301838038494) * r +
              2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  0.0012426609473880784386) * r + 0.026532189526576123093) * r +
                0.29656057182850489123) * r + 1.7848265399172913358) * r +
              5.4637849111641143699) * r + 6.6579046435011037772) /
            (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
                  1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
                0.0148753612908506148525) * r + 0.13692988092273580531) * r +
              0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -value : value;
}

InfluenceMatrix eif_matrix(const Eigen::MatrixXd& pseudo,
                           const Eigen::VectorXd& u1_hat,
                           const Eigen::MatrixXd& jac_u2) {
  const int d = static_cast<int>(pseudo.cols());
  if (u1_hat.size() != d || jac_u2.rows() != d || jac_u2.cols() != d) {
    throw ContractError("eif_matrix: dimension mismatch");
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      jac_u2, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0) || smax / smin > 1e14) {
    throw InferenceError("eif_matrix: singular estimating-equation Jacobian "
                         "(condition ~" +
                         std::to_string(smax / std::max(smin, 1e-300)) + ")");
  }
  InfluenceMatrix out;
  out.jac_condition = smax / smin;
  const Eigen::MatrixXd centered = pseudo.rowwise() - u1_hat.transpose();
  out.S = -svd.solve(centered.transpose()).transpose();
  return out;
}

WaldResult wald(double ci_level, const InfluenceMatrix& infl,
                const Eigen::VectorXd& beta) {
  const int n = static_cast<int>(infl.S.rows());
  const int d = static_cast<int>(infl.S.cols());
  if (n < 2) throw ContractError("wald: need n >= 2");
  if (beta.size() != d) throw ContractError("wald: beta dimension mismatch");
  WaldResult out;
  out.sigma = (infl.S.transpose() * infl.S) / static_cast<double>(n);
  const double z = std::abs(ci_level - 0.95) < 1e-12
                       ? kZ975
                       : normal_quantile(0.5 + ci_level / 2.0);
  out.ci_low.resize(d);
  out.ci_high.resize(d);
  for (int k = 0; k < d; ++k) {
    const double half = z * std::sqrt(std::max(out.sigma(k, k), 0.0) / n);
    out.ci_low(k) = beta(k) - half;
    out.ci_high(k) = beta(k) + half;
  }
  return out;
}

}  // namespace msmkit

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "mnl/errors.hpp"
#include "mnl/numio.hpp"

namespace mnl {

using Complex = std::complex<double>;

// Uniformly sampled signal window: values f(x0 + j*dx), j = 0..n-1.  The
// window length tau = n*dx plays the role of the averaging horizon in the
// long-time means below; sequence data is one-sided, so every limit over
// (-tau, tau) is realized as the average over [x0, x0 + tau).
struct SampledSignal {
  double x0 = 0.0;
  double dx = 1.0;
  std::vector<Complex> values;

  std::size_t size() const { return values.size(); }
  double x_at(std::size_t j) const { return x0 + static_cast<double>(j) * dx; }
  double window() const { return static_cast<double>(size()) * dx; }
};

inline void validate(const SampledSignal& s) {
  if (!(s.dx > 0.0)) throw InvalidRange("signal dx must be > 0");
  if (s.size() < 2) throw InvalidRange("signal needs at least 2 samples");
  for (const Complex& v : s.values)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw InvalidRange("signal contains a non-finite sample");
  if (!std::isfinite(s.x0)) throw InvalidRange("signal x0 must be finite");
}

template <typename Fn>
SampledSignal make_signal(double x0, double dx, std::size_t n, Fn&& fn) {
  SampledSignal s;
  s.x0 = x0;
  s.dx = dx;
  s.values.reserve(n);
  for (std::size_t j = 0; j < n; ++j) s.values.push_back(fn(x0 + static_cast<double>(j) * dx));
  return s;
}

namespace detail {

inline Complex coefficient_kernel(const SampledSignal& s, double eta) {
  const Complex rot = std::polar(1.0, -eta * s.dx);
  Complex phase = std::polar(1.0, -eta * s.x0);
  Complex acc = 0.0;
  for (const Complex& v : s.values) {
    acc += v * phase;
    phase *= rot;
  }
  return acc / static_cast<double>(s.size());
}

}  // namespace detail

// Generalized Fourier coefficient at frequency eta: the window mean of
// f(x) e^{-i eta x}.  The phasor advances by a unit-modulus rotation per
// sample; over desk-scale windows the accumulated rounding (~n eps) sits far
// below the spectral leakage floor.
inline Complex estimate_coefficient(const SampledSignal& s, double eta) {
  validate(s);
  return detail::coefficient_kernel(s, eta);
}

// Quadratic-mean norm over the window: sqrt((1/n) sum |f|^2).
inline double besicovich_norm(const SampledSignal& s) {
  validate(s);
  double acc = 0.0;
  for (const Complex& v : s.values) acc += v.real() * v.real() + v.imag() * v.imag();
  return std::sqrt(acc / static_cast<double>(s.size()));
}

// Window mean of e^{i eta_j x} conj(e^{i eta_k x}).  Equal frequencies give
// exactly 1 (the phase increment is a true zero, so every summand is 1+0i);
// distinct frequencies are bounded by the geometric-series leakage term.
// Frequencies differing by a multiple of 2*pi/dx alias onto the diagonal.
inline Complex inner_product_exp(double eta_j, double eta_k, double x0, double dx,
                                 std::size_t n) {
  if (!(dx > 0.0) || n < 2) throw InvalidRange("inner_product_exp: need dx > 0 and n >= 2");
  const double delta = eta_j - eta_k;
  const Complex rot = std::polar(1.0, delta * dx);
  Complex phase = std::polar(1.0, delta * x0);
  Complex acc = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    acc += phase;
    phase *= rot;
  }
  return acc / static_cast<double>(n);
}

struct ScanConfig {
  double eta_max = 0.0;
  double grid_step = 0.0;       // <= pi/(4*tau): at least 8 points per resolution width
  double amp_threshold = 0.0;   // detection floor on |a(eta)|
};

inline ScanConfig default_scan_config(const SampledSignal& s, double eta_max,
                                      double amp_threshold) {
  ScanConfig cfg;
  cfg.eta_max = eta_max;
  cfg.grid_step = (2.0 * 3.14159265358979323846 / s.window()) / 8.0;
  cfg.amp_threshold = amp_threshold;
  return cfg;
}

// Scans |a(eta)| on the grid {0, grid_step, ..., eta_max}, keeps strict local
// maxima above the threshold, sharpens each peak by parabolic interpolation of
// the log magnitudes, and merges detections inside one resolution width
// 2*pi/tau (larger magnitude wins).
inline std::vector<double> detect_frequencies(const SampledSignal& s, const ScanConfig& cfg) {
  validate(s);
  constexpr double kPi = 3.14159265358979323846;
  const double tau = s.window();
  const double resolution = 2.0 * kPi / tau;
  if (!(cfg.grid_step > 0.0) || cfg.grid_step > resolution / 8.0 * (1.0 + 1e-12))
    throw InvalidScan("grid_step must be positive and at most (2*pi/tau)/8");
  if (!(cfg.eta_max > 0.0) || !(cfg.eta_max < kPi / s.dx))
    throw InvalidScan("eta_max must lie in (0, pi/dx): scanning beyond aliases");
  if (!(cfg.amp_threshold > 0.0)) throw InvalidScan("amp_threshold must be > 0");

  const std::size_t grid_n = static_cast<std::size_t>(cfg.eta_max / cfg.grid_step + 1e-9) + 1;
  std::vector<double> mag(grid_n);
  for (std::size_t g = 0; g < grid_n; ++g)
    mag[g] = std::abs(detail::coefficient_kernel(s, static_cast<double>(g) * cfg.grid_step));

  struct Peak {
    double eta;
    double mag;
  };
  std::vector<Peak> peaks;
  for (std::size_t g = 0; g < grid_n; ++g) {
    const bool left_ok = g == 0 || mag[g] > mag[g - 1];
    const bool right_ok = g + 1 == grid_n || mag[g] > mag[g + 1];
    if (!(left_ok && right_ok && mag[g] > cfg.amp_threshold)) continue;
    double eta = static_cast<double>(g) * cfg.grid_step;
    if (g > 0 && g + 1 < grid_n && mag[g - 1] > 0.0 && mag[g + 1] > 0.0) {
      const double l1 = std::log(mag[g - 1]);
      const double l2 = std::log(mag[g]);
      const double l3 = std::log(mag[g + 1]);
      const double den = l1 - 2.0 * l2 + l3;
      if (den < 0.0) {
        double offset = 0.5 * (l1 - l3) / den;
        offset = std::clamp(offset, -0.5, 0.5);
        eta += offset * cfg.grid_step;
      }
    }
    peaks.push_back({eta, mag[g]});
  }

  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.eta < b.eta; });
  std::vector<Peak> merged;
  for (const Peak& p : peaks) {
    if (!merged.empty() && p.eta - merged.back().eta < resolution) {
      if (p.mag > merged.back().mag) merged.back() = p;
    } else {
      merged.push_back(p);
    }
  }
  std::vector<double> out;
  out.reserve(merged.size());
  for (const Peak& p : merged) out.push_back(p.eta);
  return out;
}

struct TrigTerm {
  double eta = 0.0;
  Complex coeff;
};

// Finite trigonometric polynomial sum a_k e^{i eta_k x} with fit metadata.
struct TrigPolynomialModel {
  std::vector<TrigTerm> terms;  // eta strictly increasing
  double window_used = 0.0;     // tau of the window the fit saw
  double residual_norm = 0.0;   // Besicovich norm of (signal - model) on that window
};

inline Complex predict_ap(const TrigPolynomialModel& model, double x) {
  Complex acc = 0.0;
  for (const TrigTerm& t : model.terms) acc += t.coeff * std::polar(1.0, t.eta * x);
  return acc;
}

namespace detail {

// Gaussian elimination with partial pivoting; A is row-major n x n.
inline std::vector<Complex> solve_dense(std::vector<Complex> a, std::vector<Complex> b,
                                        std::size_t n) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::abs(a[col * n + col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double m = std::abs(a[r * n + col]);
      if (m > best) {
        best = m;
        pivot = r;
      }
    }
    if (best == 0.0) throw Error("singular system in coefficient refinement");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const Complex f = a[r * n + col] / a[col * n + col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<Complex> x(n);
  for (std::size_t r = n; r-- > 0;) {
    Complex acc = b[r];
    for (std::size_t c = r + 1; c < n; ++c) acc -= a[r * n + c] * x[c];
    x[r] = acc / a[r * n + r];
  }
  return x;
}

inline bool is_real_signal(const SampledSignal& s) {
  for (const Complex& v : s.values)
    if (v.imag() != 0.0) return false;
  return true;
}

}  // namespace detail

// Detect frequencies, then refine the coefficients jointly by least squares
// over the detected exponentials on the window.  The joint solve removes the
// finite-window cross-talk that biases the raw window-mean estimates; those
// remain available through estimate_coefficient.  Real-valued inputs get the
// mirrored -eta terms so the fitted polynomial stays real on the line.
inline TrigPolynomialModel fit_ap(const SampledSignal& s, const ScanConfig& cfg) {
  TrigPolynomialModel model;
  model.window_used = s.window();

  std::vector<double> freqs = detect_frequencies(s, cfg);
  if (freqs.empty()) {
    model.residual_norm = besicovich_norm(s);
    return model;
  }

  const double resolution = 2.0 * 3.14159265358979323846 / s.window();
  if (detail::is_real_signal(s)) {
    std::vector<double> augmented;
    for (double eta : freqs) {
      // A peak within one resolution width of 0 is indistinguishable from a
      // constant term; keep it unmirrored.
      if (eta >= resolution) augmented.push_back(-eta);
    }
    for (double eta : freqs) augmented.push_back(eta);
    std::sort(augmented.begin(), augmented.end());
    freqs = std::move(augmented);
  }

  const std::size_t k = freqs.size();
  std::vector<Complex> gram(k * k);
  std::vector<Complex> rhs(k);
  for (std::size_t row = 0; row < k; ++row) {
    rhs[row] = detail::coefficient_kernel(s, freqs[row]);
    for (std::size_t col = 0; col < k; ++col)
      gram[row * k + col] = inner_product_exp(freqs[col], freqs[row], s.x0, s.dx, s.size());
  }
  const std::vector<Complex> coeffs = detail::solve_dense(std::move(gram), std::move(rhs), k);

  for (std::size_t i = 0; i < k; ++i)
    if (std::abs(coeffs[i]) > cfg.amp_threshold) model.terms.push_back({freqs[i], coeffs[i]});

  // Residual of the retained terms over the window.
  std::vector<Complex> phases(model.terms.size()), rots(model.terms.size());
  for (std::size_t t = 0; t < model.terms.size(); ++t) {
    phases[t] = std::polar(1.0, model.terms[t].eta * s.x0);
    rots[t] = std::polar(1.0, model.terms[t].eta * s.dx);
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    Complex fit = 0.0;
    for (std::size_t t = 0; t < model.terms.size(); ++t) {
      fit += model.terms[t].coeff * phases[t];
      phases[t] *= rots[t];
    }
    const Complex d = s.values[j] - fit;
    acc += d.real() * d.real() + d.imag() * d.imag();
  }
  model.residual_norm = std::sqrt(acc / static_cast<double>(s.size()));
  return model;
}

// ---- file formats ----------------------------------------------------------

// Signal CSV: header `x,re,im` (or `x,re`), uniformly spaced x.
inline SampledSignal read_signal_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("signal CSV: missing header row");
  auto header = split(trim(line), ',');
  bool has_im = false;
  if (header.size() == 3 && trim(header[0]) == "x" && trim(header[1]) == "re" &&
      trim(header[2]) == "im")
    has_im = true;
  else if (!(header.size() == 2 && trim(header[0]) == "x" && trim(header[1]) == "re"))
    throw FormatError("signal CSV line 1: header must be `x,re,im` or `x,re`");

  std::vector<double> xs;
  SampledSignal s;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    auto cells = split(t, ',');
    if (cells.size() != (has_im ? 3u : 2u))
      throw FormatError("signal CSV line " + format_u64(lineno) + ": wrong field count");
    double x, re, im = 0.0;
    if (!try_parse_double(trim(cells[0]), x) || !try_parse_double(trim(cells[1]), re) ||
        (has_im && !try_parse_double(trim(cells[2]), im)))
      throw FormatError("signal CSV line " + format_u64(lineno) + ": malformed number");
    xs.push_back(x);
    s.values.emplace_back(re, im);
  }
  if (xs.size() < 2) throw FormatError("signal CSV: need at least 2 samples");
  s.x0 = xs[0];
  s.dx = xs[1] - xs[0];
  if (!(s.dx > 0.0)) throw FormatError("signal CSV: x must be strictly increasing");
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const double expected = s.x0 + static_cast<double>(j) * s.dx;
    if (std::abs(xs[j] - expected) > 1e-9 * std::max(1.0, std::abs(expected)))
      throw FormatError("signal CSV line " + format_u64(j + 2) +
                        ": x is not uniformly spaced");
  }
  validate(s);
  return s;
}

inline void write_signal_csv(const SampledSignal& s, std::ostream& out) {
  out << "x,re,im\n";
  for (std::size_t j = 0; j < s.size(); ++j)
    out << format_double(s.x_at(j)) << "," << format_double(s.values[j].real()) << ","
        << format_double(s.values[j].imag()) << "\n";
}

// Model CSV: `eta,re,im` rows plus `# residual=` and `# window=` footers.
inline void write_trig_model_csv(const TrigPolynomialModel& model, std::ostream& out) {
  out << "eta,re,im\n";
  for (const TrigTerm& t : model.terms)
    out << format_double(t.eta) << "," << format_double(t.coeff.real()) << ","
        << format_double(t.coeff.imag()) << "\n";
  out << "# residual=" << format_double(model.residual_norm) << "\n";
  out << "# window=" << format_double(model.window_used) << "\n";
}

inline TrigPolynomialModel read_trig_model_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "eta,re,im")
    throw FormatError("trig model CSV: missing `eta,re,im` header");
  TrigPolynomialModel model;
  bool saw_residual = false, saw_window = false;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    if (t.rfind("# residual=", 0) == 0) {
      if (!try_parse_double(t.substr(11), model.residual_norm))
        throw FormatError("trig model CSV: malformed residual footer");
      saw_residual = true;
      continue;
    }
    if (t.rfind("# window=", 0) == 0) {
      if (!try_parse_double(t.substr(9), model.window_used))
        throw FormatError("trig model CSV: malformed window footer");
      saw_window = true;
      continue;
    }
    auto cells = split(t, ',');
    if (cells.size() != 3)
      throw FormatError("trig model CSV line " + format_u64(lineno) + ": wrong field count");
    double eta, re, im;
    if (!try_parse_double(trim(cells[0]), eta) || !try_parse_double(trim(cells[1]), re) ||
        !try_parse_double(trim(cells[2]), im))
      throw FormatError("trig model CSV line " + format_u64(lineno) + ": malformed number");
    model.terms.push_back({eta, Complex(re, im)});
  }
  if (!saw_residual || !saw_window)
    throw FormatError("trig model CSV: missing residual/window footers");
  return model;
}

inline void save_trig_model(const TrigPolynomialModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file: " + path);
  write_trig_model_csv(model, out);
}

inline TrigPolynomialModel load_trig_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file: " + path);
  return read_trig_model_csv(in);
}

}  // namespace mnl

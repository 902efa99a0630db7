#include "influence/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include "influence/errors.hpp"

namespace influence {
namespace {

// 15-point Kronrod nodes/weights on [-1,1] and the embedded 7-point Gauss
// weights (abscissae 1, 3, 5, ... of the Kronrod set).
constexpr double kXgk[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};

constexpr double kWgk[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};

constexpr double kWg[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

Segment gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double fv[15];
  for (int i = 0; i < 7; ++i) {
    fv[i] = f(c - h * kXgk[i]);
    fv[14 - i] = f(c + h * kXgk[i]);
  }
  fv[7] = f(c);
  double resk = kWgk[7] * fv[7];
  double resg = kWg[3] * fv[7];
  for (int i = 0; i < 7; ++i) resk += kWgk[i] * (fv[i] + fv[14 - i]);
  for (int i = 0; i < 3; ++i) {
    int j = 2 * i + 1;
    resg += kWg[i] * (fv[j] + fv[14 - j]);
  }
  Segment s;
  s.a = a;
  s.b = b;
  s.value = resk * h;
  s.error = std::abs((resk - resg) * h);
  return s;
}

}  // namespace

QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     double tol, int max_intervals) {
  // Map infinite endpoints onto a finite parameter interval.
  std::function<double(double)> g = f;
  double lo = a, hi = b;
  const double inf = std::numeric_limits<double>::infinity();
  if (a == -inf && b == inf) {
    g = [&f](double t) {
      double den = 1.0 - t * t;
      double x = t / den;
      return f(x) * (1.0 + t * t) / (den * den);
    };
    lo = -1.0 + 1e-14;
    hi = 1.0 - 1e-14;
  } else if (b == inf) {
    g = [&f, a](double t) {
      double den = 1.0 - t;
      return f(a + t / den) / (den * den);
    };
    lo = 0.0;
    hi = 1.0 - 1e-14;
  } else if (a == -inf) {
    g = [&f, b](double t) {
      double den = 1.0 - t;
      return f(b - t / den) / (den * den);
    };
    lo = 0.0;
    hi = 1.0 - 1e-14;
  }

  std::priority_queue<Segment> heap;
  Segment whole = gk15(g, lo, hi);
  heap.push(whole);
  double total = whole.value;
  double err = whole.error;
  int count = 1;
  QuadResult out;
  while (err > std::max(tol, tol * std::abs(total)) && count < max_intervals) {
    Segment worst = heap.top();
    heap.pop();
    double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) break;  // cannot refine further
    Segment left = gk15(g, worst.a, mid);
    Segment right = gk15(g, mid, worst.b);
    total += left.value + right.value - worst.value;
    err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++count;
  }
  out.value = total;
  out.abs_error = err;
  out.intervals = count;
  out.converged = std::isfinite(total) && err <= std::max(tol, tol * std::abs(total));
  return out;
}

double integrate_or_fail(const std::function<double(double)>& f, double a, double b,
                         double tol, int max_intervals) {
  QuadResult r = integrate(f, a, b, tol, max_intervals);
  if (!std::isfinite(r.value))
    fail(ErrorKind::normalizer_divergence, "integral is not finite");
  if (!r.converged)
    fail(ErrorKind::normalizer_divergence,
         "integral did not converge (error " + std::to_string(r.abs_error) + " after " +
             std::to_string(r.intervals) + " intervals)");
  return r.value;
}

}  // namespace influence

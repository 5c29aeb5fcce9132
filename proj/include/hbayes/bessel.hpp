#pragma once

#include <complex>

/// Bessel functions of the first and second kind, orders 0 and 1, for x > 0.
/// Power series below a crossover argument, Hankel asymptotic expansions above.
namespace hbayes::bessel {

struct Values {
    double j0 = 0.0;
    double j1 = 0.0;
    double y0 = 0.0;
    double y1 = 0.0;
};

/// All four functions at once. J0 and J1 accept x >= 0; Y0 and Y1 need x > 0.
Values evaluate(double x);

double j0(double x);
double j1(double x);
double y0(double x);
double y1(double x);

std::complex<double> hankel1_0(double x);
std::complex<double> hankel1_1(double x);

}  // namespace hbayes::bessel

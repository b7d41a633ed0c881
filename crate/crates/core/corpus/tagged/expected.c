#include <math.h>

void rotate(double const *restrict inp1, double const *restrict inp2, double *restrict out1, double *restrict out2, double const alpha, int const n)
{
  double a;
  double b;
  double r;

  for (int i = 0; i <= -1 + n; ++i)
  {
    a = cos(alpha) * inp1[i] + sin(alpha) * inp2[i];
    b = -(sin(alpha) * inp1[i]) + cos(alpha) * inp2[i];
    r = sqrt(pow(a, 2.0) + pow(b, 2.0));
    a = a / r;
    b = b / r;
    out1[i] = a;
    out2[i] = b;
  }
}

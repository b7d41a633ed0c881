#include <math.h>

void fgh(double *restrict out, double const *restrict a, int const n)
{
  for (int i = 0; i <= -1 + n; ++i)
    out[i] = (1.0 + (12.0 + (double) i * a[i]) + 20.0 * (12.0 + (double) i * a[i])) * (1.0 + (12.0 + (double) i * a[i]) + 20.0 * (12.0 + (double) i * a[i]));
}

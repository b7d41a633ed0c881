#include <math.h>

void bsquare(double *restrict a, double const *restrict b, int const n)
{
  for (int i = 0; i <= -1 + n; ++i)
    a[i] = 23.0 * pow(b[i], 2.0) + 25.0 * pow(b[i], 2.0);
}

#include <math.h>

void grav(double const *restrict center, double const *restrict x, double *restrict force, double const *restrict mass, double const massc, int const npart)
{
  double radc;

  for (int i = 0; i <= -1 + npart; ++i)
  {
    {
      double acc_n = 0.0;
      for (int n = 0; n <= 2; ++n)
        acc_n = acc_n + pow(x[i * 3 + n] + -1.0 * center[n], 2.0);
      radc = sqrt(acc_n);
    }
    {
      double acc_j = 0.0;
      for (int j = 0; j <= -1 + npart; ++j)
      {
        double acc_n2 = 0.0;
        for (int n2 = 0; n2 <= 2; ++n2)
          acc_n2 = acc_n2 + pow(x[i * 3 + n2] + -1.0 * x[j * 3 + n2], 2.0);
        acc_j = acc_j + -66.742 * mass[i] * mass[j] / (pow(sqrt(acc_n2), 2.0) + 0.01);
      }
      force[i] = -66.742 * mass[i] * massc / (pow(radc, 2.0) + 0.01) + acc_j;
    }
  }
}

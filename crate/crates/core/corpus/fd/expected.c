#include <math.h>

static inline int int_floor_div_pos_b(int a, int b)
{
  return (a - (a < 0 ? b - 1 : 0)) / b;
}

void fd(float *restrict result, float const *restrict u, int const n)
{
  float u_acc_0[17];

  for (int i_outer = 0; i_outer <= -1 + int_floor_div_pos_b(15 + n, 16); ++i_outer)
  {
    for (int j = 0; j <= 16; ++j)
      u_acc_0[j] = u[i_outer * 16 + j];
    for (int i_inner = 0; i_inner <= 15; ++i_inner)
      result[i_inner + i_outer * 16] = u_acc_0[1 + i_inner] + -1.0f * u_acc_0[i_inner];
  }
}

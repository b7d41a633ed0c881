#include <math.h>

static inline int int_floor_div_pos_b(int a, int b)
{
  return (a - (a < 0 ? b - 1 : 0)) / b;
}

void fill(double *restrict out, double const a, int const n)
{
  for (int i_outer = 0; i_outer <= -1 + int_floor_div_pos_b(127 + n, 128); ++i_outer)
    for (int i_inner = 0; i_inner <= (127 < -1 - i_outer * 128 + n ? 127 : -1 - i_outer * 128 + n); ++i_inner)
      out[i_inner + i_outer * 128] = a;
}

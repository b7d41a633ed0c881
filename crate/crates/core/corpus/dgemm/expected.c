#include <math.h>

static inline int int_floor_div_pos_b(int a, int b)
{
  return (a - (a < 0 ? b - 1 : 0)) / b;
}

void dgemm(int const m, int const n, int const l, double const alpha, double const *restrict a, double const *restrict b, double *restrict c)
{
  double a_acc_0[16][32];
  double b_acc_0[32][8];

  for (int j_outer = 0; j_outer <= -1 + int_floor_div_pos_b(7 + n, 8); ++j_outer)
    for (int i_outer = 0; i_outer <= -1 + int_floor_div_pos_b(15 + m, 16); ++i_outer)
      for (int k_outer = 0; k_outer <= -1 + int_floor_div_pos_b(31 + l, 32); ++k_outer)
      {
        for (int i1 = 0; i1 <= (15 < -1 - i_outer * 16 + m ? 15 : -1 - i_outer * 16 + m); ++i1)
          for (int i2 = 0; i2 <= (31 < -1 - k_outer * 32 + l ? 31 : -1 - k_outer * 32 + l); ++i2)
            for (int j_inner = 0; j_inner <= (7 < -1 - j_outer * 8 + n ? 7 : -1 - j_outer * 8 + n); ++j_inner)
              a_acc_0[i1][i2] = a[i1 + i_outer * 16 + (i2 + k_outer * 32) * m];
        for (int i1_0 = 0; i1_0 <= (31 < -1 - k_outer * 32 + l ? 31 : -1 - k_outer * 32 + l); ++i1_0)
          for (int i2_0 = 0; i2_0 <= (7 < -1 - j_outer * 8 + n ? 7 : -1 - j_outer * 8 + n); ++i2_0)
            for (int i_inner = 0; i_inner <= (15 < -1 - i_outer * 16 + m ? 15 : -1 - i_outer * 16 + m); ++i_inner)
              b_acc_0[i1_0][i2_0] = b[i1_0 + k_outer * 32 + (i2_0 + j_outer * 8) * l];
        for (int k_inner = 0; k_inner <= (31 < -1 - k_outer * 32 + l ? 31 : -1 - k_outer * 32 + l); ++k_inner)
          for (int j_inner = 0; j_inner <= (7 < -1 - j_outer * 8 + n ? 7 : -1 - j_outer * 8 + n); ++j_inner)
            for (int i_inner = 0; i_inner <= (15 < -1 - i_outer * 16 + m ? 15 : -1 - i_outer * 16 + m); ++i_inner)
              c[i_inner + i_outer * 16 + (j_inner + j_outer * 8) * m] = c[i_inner + i_outer * 16 + (j_inner + j_outer * 8) * m] + alpha * b_acc_0[k_inner][j_inner] * a_acc_0[i_inner][k_inner];
      }
}

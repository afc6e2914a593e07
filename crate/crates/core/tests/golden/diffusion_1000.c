#include <stdlib.h>
#include <math.h>
#include <omp.h>

#define MIN(a, b) ((a) < (b) ? (a) : (b))

int Operator(float *u_vec)
{
  float (*u)[1000][1000] = (float (*)[1000][1000]) u_vec;
  int t0, t1;
  #pragma omp parallel
  {
    for (int i3 = 0; i3<500; i3++)
    {
      #pragma omp single
      {
        t0 = (i3) % 2;
        t1 = (t0 + 1) % 2;
      }
      #pragma omp for schedule(static)
      for (int i1 = 1; i1<999; i1++)
      {
        #pragma omp simd aligned(u:64)
        for (int i2 = 1; i2<999; i2++)
        {
          u[t1][i1][i2] = 2.5e-1F*u[t0][i1][i2-1] + 2.5e-1F*u[t0][i1][i2+1] + 2.5e-1F*u[t0][i1-1][i2] + 2.5e-1F*u[t0][i1+1][i2];
        }
      }
    }
  }
  return 0;
}

int Operator_argv(void **args)
{
  return Operator((float *) args[0]);
}

void Operator_set_threads(int n)
{
  if (n > 0) omp_set_num_threads(n);
}

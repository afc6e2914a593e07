#include <stdlib.h>
#include <math.h>
#include <omp.h>

#define MIN(a, b) ((a) < (b) ? (a) : (b))

static const int q_cell[1][3] = {{6, 6, 3}};
static const float q_w[1][8] = {{1e0F, 0e0F, 0e0F, 0e0F, 0e0F, 0e0F, 0e0F, 0e0F}};
static const int rec_cell[3][3] = {{2, 6, 6}, {4, 6, 6}, {6, 6, 6}};
static const float rec_w[3][8] = {{6.3e-1F, 3.7e-1F, 0e0F, 0e0F, 0e0F, 0e0F, 0e0F, 0e0F}, {6.3e-1F, 3.7e-1F, 0e0F, 0e0F, 0e0F, 0e0F, 0e0F, 0e0F}, {6.3e-1F, 3.7e-1F, 0e0F, 0e0F, 0e0F, 0e0F, 0e0F, 0e0F}};

int Operator(float *m_vec, float *eta_vec, float *u_vec, float *q_vec, float *rec_vec)
{
  float (*m)[12][10] = (float (*)[12][10]) m_vec;
  float (*eta)[12][10] = (float (*)[12][10]) eta_vec;
  float (*u)[12][12][10] = (float (*)[12][12][10]) u_vec;
  float (*q)[1] = (float (*)[1]) q_vec;
  float (*rec)[3] = (float (*)[3]) rec_vec;
  int t0, t1, t2;
  #pragma omp parallel
  {
    for (int i4 = 1; i4<7; i4++)
    {
      #pragma omp single
      {
        t0 = (i4 + 2) % 3;
        t1 = (t0 + 1) % 3;
        t2 = (t0 + 2) % 3;
      }
      #pragma omp for schedule(static)
      for (int i1 = 2; i1<10; i1++)
      {
        for (int i2 = 2; i2<10; i2++)
        {
          #pragma omp simd aligned(m,eta,u:64)
          for (int i3 = 2; i3<8; i3++)
          {
            u[t2][i1][i2][i3] = (1.8518518e2F*eta[i1][i2][i3]*u[t0][i1][i2][i3] - 1.3717422e5F*m[i1][i2][i3]*u[t0][i1][i2][i3] + 2.7434844e5F*m[i1][i2][i3]*u[t1][i1][i2][i3] - 3.3333335e-2F*u[t1][i1][i2][i3] - 3.7037037e-4F*u[t1][i1][i2][i3-2] + 5.925926e-3F*u[t1][i1][i2][i3-1] + 5.925926e-3F*u[t1][i1][i2][i3+1] - 3.7037037e-4F*u[t1][i1][i2][i3+2] - 3.7037037e-4F*u[t1][i1][i2-2][i3] + 5.925926e-3F*u[t1][i1][i2-1][i3] + 5.925926e-3F*u[t1][i1][i2+1][i3] - 3.7037037e-4F*u[t1][i1][i2+2][i3] - 3.7037037e-4F*u[t1][i1-2][i2][i3] + 5.925926e-3F*u[t1][i1-1][i2][i3] + 5.925926e-3F*u[t1][i1+1][i2][i3] - 3.7037037e-4F*u[t1][i1+2][i2][i3])/(1.8518518e2F*eta[i1][i2][i3] + 1.3717422e5F*m[i1][i2][i3]);
          }
        }
      }
      #pragma omp single
      {
        for (int p = 0; p<1; p++)
        {
          u[t2][q_cell[p][0]][q_cell[p][1]][q_cell[p][2]] = 7.29e-6F*q[i4][p]*q_w[p][0]/m[q_cell[p][0]][q_cell[p][1]][q_cell[p][2]] + u[t2][q_cell[p][0]][q_cell[p][1]][q_cell[p][2]];
          u[t2][q_cell[p][0]+1][q_cell[p][1]][q_cell[p][2]] = 7.29e-6F*q[i4][p]*q_w[p][1]/m[q_cell[p][0]+1][q_cell[p][1]][q_cell[p][2]] + u[t2][q_cell[p][0]+1][q_cell[p][1]][q_cell[p][2]];
          u[t2][q_cell[p][0]][q_cell[p][1]+1][q_cell[p][2]] = 7.29e-6F*q[i4][p]*q_w[p][2]/m[q_cell[p][0]][q_cell[p][1]+1][q_cell[p][2]] + u[t2][q_cell[p][0]][q_cell[p][1]+1][q_cell[p][2]];
          u[t2][q_cell[p][0]+1][q_cell[p][1]+1][q_cell[p][2]] = 7.29e-6F*q[i4][p]*q_w[p][3]/m[q_cell[p][0]+1][q_cell[p][1]+1][q_cell[p][2]] + u[t2][q_cell[p][0]+1][q_cell[p][1]+1][q_cell[p][2]];
          u[t2][q_cell[p][0]][q_cell[p][1]][q_cell[p][2]+1] = 7.29e-6F*q[i4][p]*q_w[p][4]/m[q_cell[p][0]][q_cell[p][1]][q_cell[p][2]+1] + u[t2][q_cell[p][0]][q_cell[p][1]][q_cell[p][2]+1];
          u[t2][q_cell[p][0]+1][q_cell[p][1]][q_cell[p][2]+1] = 7.29e-6F*q[i4][p]*q_w[p][5]/m[q_cell[p][0]+1][q_cell[p][1]][q_cell[p][2]+1] + u[t2][q_cell[p][0]+1][q_cell[p][1]][q_cell[p][2]+1];
          u[t2][q_cell[p][0]][q_cell[p][1]+1][q_cell[p][2]+1] = 7.29e-6F*q[i4][p]*q_w[p][6]/m[q_cell[p][0]][q_cell[p][1]+1][q_cell[p][2]+1] + u[t2][q_cell[p][0]][q_cell[p][1]+1][q_cell[p][2]+1];
          u[t2][q_cell[p][0]+1][q_cell[p][1]+1][q_cell[p][2]+1] = 7.29e-6F*q[i4][p]*q_w[p][7]/m[q_cell[p][0]+1][q_cell[p][1]+1][q_cell[p][2]+1] + u[t2][q_cell[p][0]+1][q_cell[p][1]+1][q_cell[p][2]+1];
        }
      }
      #pragma omp single
      {
        for (int p = 0; p<3; p++)
        {
          rec[i4+1][p] = rec_w[p][0]*u[t2][rec_cell[p][0]][rec_cell[p][1]][rec_cell[p][2]] + rec_w[p][1]*u[t2][rec_cell[p][0]+1][rec_cell[p][1]][rec_cell[p][2]] + rec_w[p][2]*u[t2][rec_cell[p][0]][rec_cell[p][1]+1][rec_cell[p][2]] + rec_w[p][3]*u[t2][rec_cell[p][0]+1][rec_cell[p][1]+1][rec_cell[p][2]] + rec_w[p][4]*u[t2][rec_cell[p][0]][rec_cell[p][1]][rec_cell[p][2]+1] + rec_w[p][5]*u[t2][rec_cell[p][0]+1][rec_cell[p][1]][rec_cell[p][2]+1] + rec_w[p][6]*u[t2][rec_cell[p][0]][rec_cell[p][1]+1][rec_cell[p][2]+1] + rec_w[p][7]*u[t2][rec_cell[p][0]+1][rec_cell[p][1]+1][rec_cell[p][2]+1];
        }
      }
    }
  }
  return 0;
}

int Operator_argv(void **args)
{
  return Operator((float *) args[0], (float *) args[1], (float *) args[2], (float *) args[3], (float *) args[4]);
}

void Operator_set_threads(int n)
{
  if (n > 0) omp_set_num_threads(n);
}

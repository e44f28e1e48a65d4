#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "lsor.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      const char *msg = lsor_last_error();                            \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond,  \
              msg ? msg : "no error");                                \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  LsorScenario *s = NULL;
  CHECK(lsor_scenario_new("dera", &s) == LSOR_STATUS_OK);
  CHECK(lsor_scenario_set_number(s, "t_end", 2.0) == LSOR_STATUS_OK);

  LsorDecision d;
  CHECK(lsor_assess(s, &d) == LSOR_STATUS_OK);
  CHECK(d.verdict == LSOR_VERDICT_QSS_PLUS_BOUNDARY_LAYER);

  LsorTrajectory *t = NULL;
  CHECK(lsor_simulate(s, "reduced", &t) == LSOR_STATUS_OK);
  size_t n = lsor_trajectory_len(t);
  CHECK(n == 2001);
  size_t p_col = lsor_trajectory_column_count(t);
  for (size_t i = 0; i < lsor_trajectory_column_count(t); i++) {
    if (strcmp(lsor_trajectory_column_name(t, i), "P") == 0) p_col = i;
  }
  CHECK(p_col < lsor_trajectory_column_count(t));
  double *buf = malloc(n * sizeof(double));
  CHECK(lsor_trajectory_column(t, p_col, buf, n) == LSOR_STATUS_OK);
  CHECK(fabs(buf[0] - 0.5) < 1e-9);
  free(buf);
  lsor_trajectory_free(t);

  CHECK(lsor_scenario_new("motor-z", &s) == LSOR_STATUS_CONFIG);
  CHECK(s == NULL);
  CHECK(lsor_last_error() != NULL);
  lsor_scenario_free(s);
  printf("ok %s\n", lsor_version());
  return 0;
}

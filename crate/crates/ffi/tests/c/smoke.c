#include <stdio.h>
#include <string.h>
#include "drem.h"

#define CHECK(expr)                                                          \
    do {                                                                     \
        DremStatus st_ = (expr);                                             \
        if (st_ != DREM_STATUS_OK) {                                         \
            const char *msg_ = drem_last_error_message();                    \
            fprintf(stderr, "%s -> %d: %s\n", #expr, (int)st_, msg_ ? msg_ : ""); \
            return 1;                                                        \
        }                                                                    \
    } while (0)

int main(void) {
    double m[4] = {1.0, 2.0, 3.0, 4.0};
    double d = 0.0;
    CHECK(drem_det(m, 2, &d));
    if (d != -2.0) return 2;

    DremScenario *sc = NULL;
    if (drem_scenario_load("no_such_scenario", &sc) != DREM_STATUS_IO || sc != NULL) return 3;
    if (drem_last_error_message() == NULL) return 4;

    CHECK(drem_scenario_load("scenario_b", &sc));
    CHECK(drem_scenario_set(sc, "horizon", 1.0));
    DremRun *run = NULL;
    CHECK(drem_run(sc, DREM_LAW_GRADIENT, &run));
    size_t col = 0;
    CHECK(drem_run_column_index(run, "delta", &col));
    double last = 0.0;
    CHECK(drem_run_value(run, drem_run_rows(run) - 1, col, &last));
    const char *json = drem_run_summary_json(run);
    if (json == NULL || strstr(json, "\"scenario_b\"") == NULL) return 5;
    printf("rows=%zu cols=%zu delta(T)=%.6e\n", drem_run_rows(run), drem_run_columns(run), last);
    drem_run_free(run);
    drem_scenario_free(sc);
    return 0;
}

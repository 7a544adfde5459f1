#include <stdio.h>
#include "rsfc.h"

int main(void) {
    RsfcScenario *s = NULL;
    RsfcPlan *p = NULL;
    double pos[3], dur = 0.0;

    if (rsfc_scenario_generate_forest(1, 4, 10, 0.15, &s) != RSFC_STATUS_OK) {
        fprintf(stderr, "generate: %s\n", rsfc_last_error());
        return 1;
    }
    if (rsfc_plan(s, &p) != RSFC_STATUS_OK) {
        fprintf(stderr, "plan: %s\n", rsfc_last_error());
        return 2;
    }
    if (rsfc_plan_duration(p, &dur) != RSFC_STATUS_OK || dur <= 0.0) return 3;
    if (rsfc_plan_sample(p, 0, dur, pos, NULL, NULL) != RSFC_STATUS_OK) return 4;
    if (rsfc_plan_sample(p, 99, 0.0, pos, NULL, NULL) != RSFC_STATUS_OUT_OF_RANGE) return 5;
    printf("agents=%zu duration=%.3f end=%.3f,%.3f,%.3f\n",
           rsfc_scenario_agent_count(s), dur, pos[0], pos[1], pos[2]);
    rsfc_plan_free(p);
    rsfc_scenario_free(s);
    return 0;
}

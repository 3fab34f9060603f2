#include <stdio.h>
#include <string.h>

#include "riskfsc.h"

static const char *MODEL =
    "format: riskfsc-pomdp 1\n"
    "discount: 0.9\n"
    "states: a b\n"
    "actions: stay go\n"
    "observations: o\n"
    "start: 1 0\n"
    "T: stay : a : a 1\n"
    "T: stay : b : b 1\n"
    "T: go : * : b 1\n"
    "O: * : o 1\n"
    "R: stay : a 2\n"
    "R: go : a 1\n"
    "R: * : b 0\n";

int main(void) {
    RfModel *model = NULL;
    RfFsc *fsc = NULL;
    double objective = 0.0;
    RfRiskSpec spec = {RF_RISK_KIND_CVAR, 0.5};

    if (rf_model_parse(MODEL, &model) != RF_STATUS_OK) {
        fprintf(stderr, "parse: %s\n", rf_last_error_message());
        return 1;
    }
    if (rf_solve(model, spec, 0.9, 2, 1, 0, &fsc, &objective) != RF_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", rf_last_error_message());
        return 1;
    }
    if (rf_model_parse(NULL, &model) != RF_STATUS_NULL_POINTER || strstr(rf_last_error_message(), "null") == NULL) {
        return 1;
    }
    printf("objective %.6f\n", objective);
    rf_fsc_free(fsc);
    rf_model_free(model);
    return objective > 0.999999 && objective < 1.000001 ? 0 : 1;
}

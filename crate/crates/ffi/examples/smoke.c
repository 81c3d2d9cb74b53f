#include <stdio.h>
#include "plnn.h"

static const char *NET =
    "{\"format\":\"plnn-v1\",\"input_size\":2,\"layers\":["
    "{\"linear\":{\"weight\":[[1.0,1.0],[-1.0,-1.0]],\"bias\":[0.0,0.0]}},"
    "{\"relu\":{}},"
    "{\"linear\":{\"weight\":[[-1.0,-1.0]],\"bias\":[0.0]}}]}";

static const char *PROP =
    "{\"input_lb\":[-2,-2],\"input_ub\":[2,2],\"property\":{\"geq\":{\"c\":[1],\"b\":-3}}}";

int main(void) {
    PlnnNetwork *net = NULL;
    PlnnProblem *problem = NULL;
    PlnnResult *result = NULL;
    if (plnn_network_from_json(NET, &net) != PLNN_ERROR_OK) {
        fprintf(stderr, "network: %s\n", plnn_last_error());
        return 10;
    }
    if (plnn_problem_new(net, PROP, &problem) != PLNN_ERROR_OK) {
        fprintf(stderr, "problem: %s\n", plnn_last_error());
        return 11;
    }
    if (plnn_verify(problem, "babsb", -1.0, 0, &result) != PLNN_ERROR_OK) {
        fprintf(stderr, "verify: %s\n", plnn_last_error());
        return 12;
    }
    double x[2];
    size_t len = 0;
    int code = plnn_result_verdict(result);
    if (plnn_result_counterexample(result, x, 2, &len) == PLNN_ERROR_OK) {
        printf("counterexample %g %g\n", x[0], x[1]);
    }
    char *json = plnn_result_to_json(result);
    printf("%s\n", json);
    plnn_string_free(json);
    plnn_result_free(result);
    plnn_problem_free(problem);
    plnn_network_free(net);
    return code;
}

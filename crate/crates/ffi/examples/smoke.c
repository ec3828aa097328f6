#include <stdio.h>
#include "higgslab.h"

int main(void) {
    HlManifold *m = NULL;
    HlBundle *b = NULL;
    HlMetric *h = NULL;
    double sup = 0.0, res = 0.0;
    if (hl_manifold_cusp(4.0, 17, 8, &m) != HL_STATUS_OK) {
        fprintf(stderr, "%s\n", hl_last_error());
        return 1;
    }
    if (hl_bundle_from_json(m, "{\"preset\":\"split_pair\",\"c\":0.5}", &b) != HL_STATUS_OK ||
        hl_solve_perturbed(m, b, 0.5, &h, &sup, &res) != HL_STATUS_OK) {
        fprintf(stderr, "%s\n", hl_last_error());
        return 1;
    }
    printf("higgslab %s: nodes %zu, sup|log h| = %.6f, residual = %.3e\n", hl_version(), hl_manifold_len(m), sup, res);
    HlManifold *bad = NULL;
    if (hl_manifold_cusp(0.5, 8, 8, &bad) == HL_STATUS_OK) return 1;
    printf("expected failure: %s\n", hl_last_error());
    hl_metric_free(h);
    hl_bundle_free(b);
    hl_manifold_free(m);
    return 0;
}

/* Minimal C consumer of the qcnn C ABI.
 *
 *   cc -I crates/ffi/include crates/ffi/examples/smoke.c \
 *      -L target/debug -lqcnn_ffi -lm -lpthread -ldl -o smoke
 */
#include <stdio.h>
#include <stdlib.h>

#include "qcnn.h"

int main(void) {
    QcnnArch *arch = NULL;
    if (qcnn_arch_builtin("fig1a", &arch) != QCNN_STATUS_OK) {
        fprintf(stderr, "arch: %s\n", qcnn_last_error());
        return 1;
    }
    size_t total = 0, independent = 0;
    qcnn_arch_count_params(arch, &total, &independent);

    const char *complex_text = "pkd 6\nL C 0 0 0\nL O 1.2 0 0\nP N 3 1 0\nP C -2 3 1\n";
    double state[512];
    double label = 0.0;
    if (qcnn_encode_complex(complex_text, 9, state, 512, &label) != QCNN_STATUS_OK) {
        fprintf(stderr, "encode: %s\n", qcnn_last_error());
        return 1;
    }

    QcnnModel *model = NULL;
    if (qcnn_model_init(arch, 1, &model) != QCNN_STATUS_OK) {
        fprintf(stderr, "init: %s\n", qcnn_last_error());
        return 1;
    }
    double p0 = 0.0, dg = 0.0;
    if (qcnn_model_predict(model, state, 512, &p0, &dg) != QCNN_STATUS_OK) {
        fprintf(stderr, "predict: %s\n", qcnn_last_error());
        return 1;
    }
    printf("params %zu %zu label %.3f p0 %.6f\n", total, independent, label, p0);

    qcnn_model_free(model);
    qcnn_arch_free(arch);
    return 0;
}

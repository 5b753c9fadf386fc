#include <stdio.h>
#include <string.h>

#include "specrecon.h"

#define CHECK(call)                                                          \
    do {                                                                     \
        SrStatus s_ = (call);                                                \
        if (s_ != SR_STATUS_OK) {                                            \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, sr_last_error_message()); \
            return 1;                                                        \
        }                                                                    \
    } while (0)

int main(void) {
    SrModel *model = NULL;
    CHECK(sr_model_init(1, 8, 4, 31, 3, &model));

    enum { H = 18, W = 21 };
    static float rgb[3 * H * W];
    for (size_t i = 0; i < sizeof rgb / sizeof rgb[0]; i++) {
        rgb[i] = (float)(i % 17) / 17.0f;
    }
    SrCube *cube = NULL;
    CHECK(sr_predict(model, rgb, H, W, 1, &cube));
    size_t h = 0, w = 0, bands = 0;
    CHECK(sr_cube_dims(cube, &h, &w, &bands));

    SrMetrics m;
    CHECK(sr_compute_metrics(cube, cube, &m));

    SrCube *bad = NULL;
    SrStatus s = sr_cube_load("/nonexistent.hscb", &bad);
    if (s != SR_STATUS_IO || strstr(sr_last_error_message(), "nonexistent") == NULL) {
        fprintf(stderr, "expected an I/O error, got %d\n", (int)s);
        return 1;
    }

    printf("dims %zux%zux%zu rmse %g lr %g\n", h, w, bands, m.rmse, sr_lr_at(0.0005, 0.93, 50000, 50000));
    sr_cube_free(cube);
    sr_model_free(model);
    return 0;
}

/* cc -Icrates/ffi/include crates/ffi/examples/smoke.c target/release/libdloc_ffi.a -lm -lpthread -ldl */
#include <stdio.h>
#include "dloc.h"

int main(void) {
  DlocConfig *cfg = NULL;
  DlocDataset *ds = NULL;
  const char *toml = "seed = 5\nsnr_db = [20.0]\n[dataset]\nrecords_per_snr = 2\n";
  if (dloc_config_from_toml(toml, &cfg) != DLOC_STATUS_OK) {
    fprintf(stderr, "config: %s\n", dloc_last_error());
    return 1;
  }
  if (dloc_dataset_generate(cfg, &ds) != DLOC_STATUS_OK) {
    fprintf(stderr, "generate: %s\n", dloc_last_error());
    return 1;
  }
  for (size_t i = 0; i < dloc_dataset_len(ds); i++) {
    double truth[3], est[3];
    dloc_dataset_label(ds, i, truth);
    if (dloc_estimate(cfg, DLOC_ESTIMATOR_GCC_PHAT, ds, i, NULL, est) != DLOC_STATUS_OK) {
      fprintf(stderr, "estimate: %s\n", dloc_last_error());
      return 1;
    }
    printf("truth (%.1f, %.1f, %.1f) estimate (%.1f, %.1f, %.1f)\n", truth[0], truth[1], truth[2], est[0], est[1],
           est[2]);
  }
  dloc_dataset_free(ds);
  dloc_config_free(cfg);
  printf("dloc %s\n", dloc_version());
  return 0;
}

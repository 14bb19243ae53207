#include <math.h>
#include <stdio.h>
#include <string.h>

#include "phenokit.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      const char *e = pk_last_error();                                \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond,  \
              e ? e : "no error");                                    \
      return 1;                                                       \
    }                                                                 \
  } while (0)

static const char *LOG =
    "{\"participant_id\":\"p1\",\"device_os\":\"android\","
    "\"timestamp\":\"2019-03-04T10:00:00+10:00\",\"kind\":\"gps\","
    "\"payload\":{\"latitude\":-33.9,\"longitude\":151.2}}\n";

int main(void) {
  uint64_t scheduled = 0;
  CHECK(pk_scheduled_count(NULL, &scheduled) == PK_STATUS_OK);
  CHECK(scheduled == 9156);

  PkDataset *ds = NULL;
  CHECK(pk_dataset_parse(LOG, NULL, true, false, &ds) == PK_STATUS_OK);
  size_t n = 0;
  CHECK(pk_dataset_event_count(ds, &n) == PK_STATUS_OK && n == 1);

  char *json = NULL;
  CHECK(pk_dataset_report_json(ds, NULL, 36000, &json) == PK_STATUS_OK);
  CHECK(strstr(json, "\"participants\": 1") != NULL);
  pk_string_free(json);
  pk_dataset_free(ds);

  uint8_t mac[6] = {0, 1, 2, 3, 4, 5};
  char *hash = NULL;
  CHECK(pk_hash_device_id(mac, 6, NULL, &hash) == PK_STATUS_OK);
  CHECK(strlen(hash) == 64);
  pk_string_free(hash);
  CHECK(pk_hash_device_id(mac, 5, NULL, &hash) == PK_STATUS_INVALID_INPUT);
  CHECK(pk_last_error() != NULL);

  CHECK(pk_is_phone_device(0x5A020C));
  CHECK(!pk_is_phone_device(0x240404));

  double x[2] = {0.0, 12.0};
  double y[2] = {100.0 / 21.3, 100.0 / 18.8};
  PkBatteryFit fit;
  CHECK(pk_fit_battery_model(x, y, 2, &fit) == PK_STATUS_OK);
  double life = 0.0;
  CHECK(pk_predict_battery_life(&fit, 12.0, &life) == PK_STATUS_OK);
  CHECK(fabs(life - 18.8) < 1e-9);

  CHECK(pk_scheduled_count(NULL, NULL) == PK_STATUS_NULL_POINTER);
  puts("ok");
  return 0;
}

"""One-off calibration of the synthetic generator.

Scans session-offset and motion-noise spreads at 20 participants x (12 rest +
8 walking) sessions and prints identification accuracy, motion accuracy and
pooled authentication EER for each setting and seed. The chosen setting is
frozen in src/earcapauth/data/calibrated_generator.json.

    python scripts/calibrate.py --session-sigma 45 50 52 55 --motion-sigma 60 --seeds 0 1 2
"""

import argparse

from earcapauth.core import PipelineConfig
from earcapauth.eval import auth_protocol, id_protocol, motion_eval
from earcapauth.ingestion import chunk_dataset
from earcapauth.synth import GeneratorParams, generate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--user-sigma", type=float, default=40.0)
    ap.add_argument("--session-sigma", type=float, nargs="+", default=[45.0, 50.0, 52.0, 55.0])
    ap.add_argument("--motion-sigma", type=float, nargs="+", default=[60.0])
    ap.add_argument("--frame-sigma", type=float, default=4.0)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = ap.parse_args()

    cfg = PipelineConfig()
    print("session_sigma,motion_sigma,seed,id_accuracy,motion_accuracy,auth_eer")
    for ss in args.session_sigma:
        for ms in args.motion_sigma:
            for seed in args.seeds:
                params = GeneratorParams(
                    user_sigma=args.user_sigma,
                    session_sigma=ss,
                    frame_sigma=args.frame_sigma,
                    motion_sigma_extra=ms,
                    rng_seed=seed,
                )
                ds = generate_dataset(params)
                table = chunk_dataset(ds, cfg)
                ident = id_protocol(ds, cfg, table).pooled["accuracy_mean"]
                motion = motion_eval(ds, cfg, "id", table).pooled["accuracy_mean"]
                eer = auth_protocol(ds, cfg, table).pooled["eer"]
                print(f"{ss:g},{ms:g},{seed},{ident:.4f},{motion:.4f},{eer:.4f}", flush=True)


if __name__ == "__main__":
    main()

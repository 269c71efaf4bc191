"""
Finding pops in a clip
======================

A plosive ("p", "b") pushes a puff of air into the microphone, which shows up
as a short burst of energy at or below 100 Hz.  A loudspeaker cannot
reproduce that burst well.  This script builds one live-style clip and one
replayed clip, computes the per-frame low-band energy and shows which frames
the detector marks.
"""

import numpy as np

from popforge.corpus import Label, synth_clip
from popforge.pop_detect import PopDetectParams, detect_pops, dump_energy_csv, lowband_energy

rng = np.random.default_rng(0)
params = PopDetectParams()  # 64 ms frames, 16 ms hop, <=100 Hz, mu + 2 sigma

live = synth_clip(rng, Label.REAL, source_id="live")
replay = synth_clip(rng, Label.SPOOF, source_id="replay")

for clip in (live, replay):
    e = lowband_energy(clip, params)
    segs = detect_pops(e, params, clip.sample_rate)
    print(f"{clip.source_id}: {len(e)} frames, peak low-band energy {e.max():.3g}, threshold "
          f"{e.mean() + params.z_threshold * e.std():.3g}")
    for s in segs:
        print(f"   pop {s.start_s:.3f}-{s.end_s:.3f} s  (frames {s.start_frame}-{s.end_frame})")

# a crude text plot of the live clip's energy envelope
e = lowband_energy(live, params)
scaled = (40 * e / e.max()).astype(int)
for i in range(0, len(e), 4):
    print(f"{i * params.hop / live.sample_rate:5.2f}s |" + "#" * scaled[i])

# the series can be dumped for plotting elsewhere
dump_energy_csv("lowband_energy.csv", e, params, live.sample_rate)

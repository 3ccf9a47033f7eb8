import { describe, expect, it } from 'vitest';

import type { BoxSnapshot, TranscriptEntry } from '../src/api.js';
import { PanelStore, buttonsEnabled, placementEnabled } from '../src/store.js';

function entry(seq: number, id = 'ready-fw'): TranscriptEntry {
  return { seq, t_us: seq * 1000, utterance_id: id, text: `utterance ${seq}` };
}

function box(overrides: Partial<BoxSnapshot> = {}): BoxSnapshot {
  return {
    state: 'BoxOpen_NoFW',
    powered: true,
    lid_open: true,
    deploy_armed: false,
    acquire_pending: false,
    network_up: false,
    keys: 0,
    images: [],
    session: null,
    sim_time_us: 0,
    ...overrides,
  };
}

describe('transcript replica', () => {
  it('accepts entries exactly once in sequence order', () => {
    const store = new PanelStore();
    store.applyTranscript(entry(0));
    store.applyTranscript(entry(1));
    store.applyTranscript(entry(1)); // duplicate from stream overlap
    store.applyTranscript(entry(2));
    expect(store.state.transcript.map((e) => e.seq)).toEqual([0, 1, 2]);
    expect(store.state.nextSeq).toBe(3);
    expect(store.state.gapDetected).toBe(false);
  });

  it('flags a gap instead of rendering out of order', () => {
    const store = new PanelStore();
    store.applyTranscript(entry(0));
    store.applyTranscript(entry(2));
    expect(store.state.transcript.map((e) => e.seq)).toEqual([0]);
    expect(store.state.gapDetected).toBe(true);
  });

  it('replay after reload reconstructs the identical transcript', () => {
    const live = new PanelStore();
    const entries = [entry(0), entry(1), entry(2, 'panic'), entry(3)];
    for (const e of entries) live.applyStreamEvent({ type: 'transcript', entry: e });

    const reloaded = new PanelStore();
    for (const e of entries) reloaded.applyTranscript(e); // REST replay
    expect(reloaded.state.transcript).toEqual(live.state.transcript);
    expect(reloaded.state.nextSeq).toBe(live.state.nextSeq);
    expect(reloaded.hasUtterance('panic')).toBe(true);
  });

  it('ignores stream events older than the replica head', () => {
    const store = new PanelStore();
    for (let seq = 0; seq < 5; seq++) store.applyTranscript(entry(seq));
    store.applyStreamEvent({ type: 'transcript', entry: entry(2) });
    expect(store.state.transcript).toHaveLength(5);
  });
});

describe('physical button rules', () => {
  it('buttons disabled without a connection', () => {
    const store = new PanelStore();
    expect(buttonsEnabled(store.state)).toBe(false);
  });

  it('buttons enabled only while the lid is open', () => {
    const store = new PanelStore();
    store.setBox(box({ lid_open: true }));
    expect(buttonsEnabled(store.state)).toBe(true);
    store.setBox(box({ lid_open: false, state: 'BoxClosed_FW' }));
    expect(buttonsEnabled(store.state)).toBe(false);
    expect(placementEnabled(store.state)).toBe(false);
  });

  it('state events from the stream drive the same rule', () => {
    const store = new PanelStore();
    store.applyStreamEvent({ type: 'state', state: box({ lid_open: false }) });
    expect(buttonsEnabled(store.state)).toBe(false);
  });
});

describe('pending and toast bookkeeping', () => {
  it('tracks pending buttons for the LED flash', () => {
    const store = new PanelStore();
    store.buttonPending('btn-deploy', true);
    expect(store.state.pendingButtons.has('btn-deploy')).toBe(true);
    store.buttonPending('btn-deploy', false);
    expect(store.state.pendingButtons.size).toBe(0);
  });

  it('notifies subscribers on every change', () => {
    const store = new PanelStore();
    let calls = 0;
    const unsubscribe = store.subscribe(() => {
      calls += 1;
    });
    store.toast('x');
    store.setConnected(true);
    unsubscribe();
    store.toast('y');
    expect(calls).toBe(2);
  });
});

/**
 * Panel state: a replica of simulation truth, rebuilt from GET snapshots
 * and kept current by the event stream. The store never invents state:
 * every mutation is an acknowledged server response or a stream message.
 */

import type {
  AttackerStatus,
  BoxSnapshot,
  NodeRow,
  StreamEvent,
  TranscriptEntry,
} from './api.js';

export interface PanelState {
  connected: boolean;
  box: BoxSnapshot | null;
  nodes: NodeRow[];
  attacker: AttackerStatus | null;
  transcript: TranscriptEntry[];
  nextSeq: number;
  gapDetected: boolean;
  pendingButtons: Set<string>;
  toasts: string[];
}

export type Listener = (state: PanelState) => void;

export function initialPanelState(): PanelState {
  return {
    connected: false,
    box: null,
    nodes: [],
    attacker: null,
    transcript: [],
    nextSeq: 0,
    gapDetected: false,
    pendingButtons: new Set(),
    toasts: [],
  };
}

/** Buttons live inside the enclosure: usable only while the lid is open. */
export function buttonsEnabled(state: PanelState): boolean {
  return state.box !== null && state.box.lid_open;
}

/** Node placement follows the same physical rule as the buttons. */
export function placementEnabled(state: PanelState): boolean {
  return buttonsEnabled(state);
}

export class PanelStore {
  state: PanelState = initialPanelState();
  private listeners: Listener[] = [];

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  setConnected(connected: boolean): void {
    this.state.connected = connected;
    this.emit();
  }

  setBox(box: BoxSnapshot): void {
    this.state.box = box;
    this.emit();
  }

  setNodes(nodes: NodeRow[]): void {
    this.state.nodes = nodes;
    this.emit();
  }

  setAttacker(attacker: AttackerStatus): void {
    this.state.attacker = attacker;
    this.emit();
  }

  buttonPending(name: string, pending: boolean): void {
    if (pending) this.state.pendingButtons.add(name);
    else this.state.pendingButtons.delete(name);
    this.emit();
  }

  toast(message: string): void {
    this.state.toasts.push(message);
    this.emit();
  }

  /**
   * Transcript entries must arrive exactly once, in sequence order.
   * Duplicates (stream replay overlap) are dropped; a gap flags the
   * replica as stale so the owner can resync from REST.
   */
  applyTranscript(entry: TranscriptEntry): void {
    if (entry.seq < this.state.nextSeq) return; // replay overlap
    if (entry.seq > this.state.nextSeq) {
      this.state.gapDetected = true;
      this.emit();
      return;
    }
    this.state.transcript.push(entry);
    this.state.nextSeq = entry.seq + 1;
    this.emit();
  }

  applyStreamEvent(event: StreamEvent): void {
    if (event.type === 'transcript') this.applyTranscript(event.entry);
    else if (event.type === 'state') this.setBox(event.state);
  }

  /** Latest utterance ids, for warning banners. */
  hasUtterance(utteranceId: string): boolean {
    return this.state.transcript.some((e) => e.utterance_id === utteranceId);
  }
}

#!/usr/bin/env python3
"""
テスト用のサンプル音声ファイルを生成するスクリプト
正弦波・チャープ・振幅変調音と、それに対応するフレーム単位ラベルを出力
"""

import argparse
import os

import numpy as np

from audio_io import AudioSignal, write_wav

SAMPLE_RATE = 16000


def generate_sine_wave(frequency, duration, sample_rate=SAMPLE_RATE, amplitude=0.5):
    """
    正弦波を生成

    Args:
        frequency (float): 周波数 (Hz)
        duration (float): 時間 (秒)
        sample_rate (int): サンプリングレート
        amplitude (float): 振幅 (0.0-1.0)

    Returns:
        AudioSignal: 音声データ
    """
    t = np.arange(int(round(sample_rate * duration))) / sample_rate
    return AudioSignal(amplitude * np.sin(2 * np.pi * frequency * t), sample_rate)


def generate_chirp(start_freq, end_freq, duration, sample_rate=SAMPLE_RATE, amplitude=0.5):
    """
    チャープ信号（周波数が時間とともに変化）を生成

    Args:
        start_freq (float): 開始周波数 (Hz)
        end_freq (float): 終了周波数 (Hz)
        duration (float): 時間 (秒)
        sample_rate (int): サンプリングレート
        amplitude (float): 振幅 (0.0-1.0)

    Returns:
        AudioSignal: 音声データ
    """
    t = np.arange(int(round(sample_rate * duration))) / sample_rate
    # 線形チャープ
    freq_array = start_freq + (end_freq - start_freq) * t / duration
    phase = 2 * np.pi * np.cumsum(freq_array) / sample_rate
    return AudioSignal(amplitude * np.sin(phase), sample_rate)


def generate_am_tone(carrier_freq, mod_freq, duration, sample_rate=SAMPLE_RATE, amplitude=0.4, depth=0.8):
    """
    振幅変調された正弦波（時間変調周波数 mod_freq のエネルギー変動）を生成

    Args:
        carrier_freq (float): 搬送波の周波数 (Hz)
        mod_freq (float): 変調周波数 (Hz)
        duration (float): 時間 (秒)
        sample_rate (int): サンプリングレート
        amplitude (float): 振幅 (0.0-1.0)
        depth (float): 変調度 (0.0-1.0)

    Returns:
        AudioSignal: 音声データ
    """
    t = np.arange(int(round(sample_rate * duration))) / sample_rate
    envelope = 1.0 + depth * np.sin(2 * np.pi * mod_freq * t)
    return AudioSignal(amplitude / (1.0 + depth) * envelope * np.sin(2 * np.pi * carrier_freq * t), sample_rate)


def generate_noise(duration, sample_rate=SAMPLE_RATE, amplitude=0.1, seed=0):
    """シード固定の白色雑音"""
    rng = np.random.default_rng(seed)
    n = int(round(sample_rate * duration))
    return AudioSignal(np.clip(amplitude * rng.standard_normal(n), -1.0, 1.0), sample_rate)


def concatenate(*signals):
    """同じサンプリングレートの信号を連結"""
    return AudioSignal(np.concatenate([s.samples for s in signals]), signals[0].sample_rate_hz)


def save_wav_file(signal, filename):
    """
    音声データをWAVファイルとして保存

    Args:
        signal (AudioSignal): 音声データ
        filename (str): ファイル名
    """
    write_wav(signal, filename)
    print(f"音声ファイルを生成しました: {filename}")


def save_label_file(segments, filename):
    """
    フレーム単位ラベル `<start> <end> <phoneme>` を保存

    Args:
        segments (list): (開始フレーム, 終了フレーム, 音素) のリスト
        filename (str): ファイル名
    """
    with open(filename, "w", encoding="utf-8") as f:
        f.write("# start_frame end_frame(exclusive) phoneme\n")
        for start, end, phoneme in segments:
            f.write(f"{start} {end} {phoneme}\n")
    print(f"ラベルファイルを生成しました: {filename}")


def main():
    """メイン関数"""
    parser = argparse.ArgumentParser(description="テスト用サンプル音声ファイルの生成")
    parser.add_argument("--out-dir", "-d", default=".", help="出力ディレクトリ (デフォルト: 現在のディレクトリ)")
    args = parser.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)

    print("テスト用サンプル音声ファイルを生成中...")

    # 1. 1kHz正弦波 - 1秒（98フレーム）
    save_wav_file(generate_sine_wave(1000, 1.0), os.path.join(args.out_dir, "sample_sine_1khz.wav"))

    # 2. チャープ信号（200Hz〜4000Hz）- 2秒
    save_wav_file(generate_chirp(200, 4000, 2.0), os.path.join(args.out_dir, "sample_chirp.wav"))

    # 3. 低い時間変調 (2.4 Hz) と高い時間変調 (25 Hz) の振幅変調音 - 各3秒
    save_wav_file(generate_am_tone(1000, 2.4, 3.0), os.path.join(args.out_dir, "sample_am_2_4hz.wav"))
    save_wav_file(generate_am_tone(1000, 25.0, 3.0), os.path.join(args.out_dir, "sample_am_25hz.wav"))

    # 4. 音素ラベル付きの疑似発話（母音風の正弦波と摩擦音風の雑音を交互に）
    pieces = [
        ("AA", generate_sine_wave(700, 0.3)),
        ("S", generate_noise(0.2, seed=1)),
        ("IY", generate_sine_wave(300, 0.3)),
        ("SH", generate_noise(0.2, seed=2, amplitude=0.2)),
        ("AA", generate_am_tone(700, 4.0, 0.3)),
        ("Z", generate_noise(0.2, seed=3, amplitude=0.05)),
    ]
    save_wav_file(concatenate(*(s for _, s in pieces)), os.path.join(args.out_dir, "sample_utterance.wav"))
    segments, start = [], 0
    for phoneme, signal in pieces:
        end = start + int(round(signal.duration_s * 100))
        segments.append((start, end, phoneme))
        start = end
    # 最後のセグメントはフレーム数 (floor((N-400)/160)+1) に収める
    last_start, _, last_phoneme = segments[-1]
    segments[-1] = (last_start, start - 2, last_phoneme)
    save_label_file(segments, os.path.join(args.out_dir, "sample_utterance.lab"))

    wav_files = sorted(f for f in os.listdir(args.out_dir) if f.endswith('.wav'))
    print("\n生成されたファイル:")
    for i, file in enumerate(wav_files, 1):
        print(f"  {i}. {file}")

    print(f"\n合計 {len(wav_files)} 個のWAVファイルが生成されました。")


if __name__ == "__main__":
    main()

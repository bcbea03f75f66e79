"""
FastAPI Gaborフィルタバンク特徴量API
アップロードされたWAVからスペクトル時間Gabor特徴量を抽出
"""

import logging
import os
import tempfile
import time

from dotenv import load_dotenv
from fastapi import FastAPI, File, HTTPException, Query, UploadFile, status
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from audio_io import read_wav
from models import (
    ErrorResponse,
    FeaturesResponse,
    FilterbankInfoResponse,
    FilterInfo,
    HealthResponse,
    SubgroupEnum,
)
from services import FeatureExtractionService

SERVICE_NAME = "GBFB Feature API"
VERSION = "1.0.0"

logger = logging.getLogger(__name__)

# 環境変数の読み込み
load_dotenv()

# FastAPIアプリケーションの初期化
app = FastAPI(
    title=SERVICE_NAME,
    description="スペクトル時間Gaborフィルタバンクによる音声特徴量抽出サービス",
    version=VERSION,
    docs_url="/docs",
    redoc_url="/redoc"
)

# CORSミドルウェアの設定
app.add_middleware(
    CORSMiddleware,
    allow_origins=os.getenv("CORS_ALLOW_ORIGINS", "*").split(","),
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# サービスの初期化（既定設定、フィルタバンクは初回利用時に構築）
feature_service = FeatureExtractionService()


@app.get("/", response_model=dict)
async def root():
    """ルートエンドポイント"""
    return {
        "message": SERVICE_NAME,
        "version": VERSION,
        "docs": "/docs",
        "health": "/health"
    }


@app.get("/health", response_model=HealthResponse)
async def health_check():
    """ヘルスチェックエンドポイント"""
    try:
        fb = feature_service.filterbank(SubgroupEnum.FULL)
        return HealthResponse(
            status="healthy",
            service=SERVICE_NAME,
            version=VERSION,
            filter_count=len(fb.filters)
        )
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail=f"Service unhealthy: {str(e)}"
        )


@app.get("/filterbank", response_model=FilterbankInfoResponse)
async def filterbank_info(subgroup: SubgroupEnum = Query(SubgroupEnum.FULL, description="サブグループ")):
    """フィルタバンクのパラメータと選択チャネル"""
    fb = feature_service.filterbank(subgroup)
    return FilterbankInfoResponse(
        subgroup=fb.subgroup,
        filter_count=len(fb.filters),
        dim=fb.dim,
        filters=[
            FilterInfo(
                filter_id=f.filter_id,
                f_n_hz=f.params.f_n_hz,
                f_k_cpc=f.params.f_k_cpc,
                orientation=f.params.orientation,
                w_n=f.params.w_n,
                w_k=f.params.w_k,
                channels=list(channels),
            )
            for f, channels in zip(fb.filters, fb.sampling)
        ],
    )


@app.post("/process/features", response_model=FeaturesResponse)
def process_features(
    file: UploadFile = File(..., description="16 kHz / 16-bit / モノラルのWAV"),
    subgroup: SubgroupEnum = Query(SubgroupEnum.FULL, description="サブグループ"),
    include_values: bool = Query(False, description="特徴量行列をレスポンスに含めるか"),
):
    """アップロードされたWAVから特徴量を抽出（スレッドプールで実行）"""
    start_time = time.time()
    data = file.file.read()

    # 一時ファイル経由でWAVを読み込む
    with tempfile.TemporaryDirectory() as temp_dir:
        temp_path = os.path.join(temp_dir, "upload.wav")
        with open(temp_path, "wb") as f:
            f.write(data)
        signal = read_wav(temp_path)

    matrix = feature_service.extract(signal, subgroup)
    logger.info("✅ 特徴量抽出: %s (%d フレーム × %d 次元)", file.filename, matrix.frames, matrix.dim)

    return FeaturesResponse(
        filename=file.filename or "upload.wav",
        subgroup=subgroup,
        frames=matrix.frames,
        dim=matrix.dim,
        frame_shift_s=matrix.frame_shift_s,
        values=matrix.values.tolist() if include_values else None,
        processing_time=time.time() - start_time,
    )


@app.exception_handler(ValueError)
async def value_error_handler(request, exc):
    """入力データの誤り（WAV形式、短すぎる信号など）"""
    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        content=ErrorResponse(
            error="Invalid input",
            detail=str(exc),
            error_code=type(exc).__name__
        ).model_dump()
    )


@app.exception_handler(Exception)
async def global_exception_handler(request, exc):
    """グローバル例外ハンドラー"""
    return JSONResponse(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        content=ErrorResponse(
            error="Internal server error",
            detail=str(exc)
        ).model_dump()
    )


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "main:app",
        host="0.0.0.0",
        port=int(os.getenv("PORT", "8011")),
        reload=True,
        log_level="info"
    )
